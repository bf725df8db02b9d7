#pragma once

#include <algorithm>

#include "aornet/core/rng.hpp"
#include "aornet/data/types.hpp"

namespace aornet::data {

// Participant-wise split: sort ids first so the result depends only on the id
// set and the seed, never on input order, then one shuffle and three cuts.
inline SplitManifest participant_split(std::vector<std::string> participants,
                                       int train_n, int val_n, int test_n,
                                       std::uint64_t seed) {
  std::sort(participants.begin(), participants.end());
  participants.erase(std::unique(participants.begin(), participants.end()),
                     participants.end());
  if (train_n + val_n + test_n != int(participants.size()))
    throw ValidationError("COUNT_MISMATCH: split counts sum to " +
                          std::to_string(train_n + val_n + test_n) + " but there are " +
                          std::to_string(participants.size()) + " participants");
  require(train_n >= 0 && val_n >= 0 && test_n >= 0, "split counts must be non-negative");

  Rng rng = Rng(seed).fork("participant-split");
  rng.shuffle(participants);

  SplitManifest m;
  m.train.assign(participants.begin(), participants.begin() + train_n);
  m.val.assign(participants.begin() + train_n, participants.begin() + train_n + val_n);
  m.test.assign(participants.begin() + train_n + val_n, participants.end());
  // sorted within each split: readable manifests, byte-stable files
  std::sort(m.train.begin(), m.train.end());
  std::sort(m.val.begin(), m.val.end());
  std::sort(m.test.begin(), m.test.end());
  return m;
}

}  // namespace aornet::data
