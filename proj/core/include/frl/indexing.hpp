#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace frl {

/// Row-major mixed-radix codec: the first digit is the most significant.
///
/// Joint states, joint actions, CPT parent configurations and Pre/Eff value
/// tuples all use this encoding so that nested JSON arrays map onto flat
/// indices without reordering.
class MixedRadix {
 public:
  MixedRadix() = default;
  explicit MixedRadix(std::vector<int> radices);

  std::size_t size() const { return size_; }
  std::size_t digits() const { return radices_.size(); }
  const std::vector<int>& radices() const { return radices_; }

  std::size_t encode(std::span<const int> digits) const;
  std::vector<int> decode(std::size_t index) const;
  void decode_into(std::size_t index, std::span<int> out) const;

 private:
  std::vector<int> radices_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 1;
};

}  // namespace frl
