#include "frl/indexing.hpp"

#include <string>

#include "frl/error.hpp"

namespace frl {

MixedRadix::MixedRadix(std::vector<int> radices) : radices_(std::move(radices)) {
  strides_.assign(radices_.size(), 1);
  size_ = 1;
  for (std::size_t i = radices_.size(); i-- > 0;) {
    if (radices_[i] < 1) {
      throw ConfigError("mixed-radix digit " + std::to_string(i) + " has radix " +
                        std::to_string(radices_[i]));
    }
    strides_[i] = size_;
    size_ *= static_cast<std::size_t>(radices_[i]);
  }
}

std::size_t MixedRadix::encode(std::span<const int> digits) const {
  if (digits.size() != radices_.size()) {
    throw ShapeError("mixed-radix encode: expected " + std::to_string(radices_.size()) +
                     " digits, got " + std::to_string(digits.size()));
  }
  std::size_t index = 0;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (digits[i] < 0 || digits[i] >= radices_[i]) {
      throw DomainError("mixed-radix encode: digit " + std::to_string(i) + " = " +
                        std::to_string(digits[i]) + " outside [0, " +
                        std::to_string(radices_[i]) + ")");
    }
    index += static_cast<std::size_t>(digits[i]) * strides_[i];
  }
  return index;
}

std::vector<int> MixedRadix::decode(std::size_t index) const {
  std::vector<int> out(radices_.size());
  decode_into(index, out);
  return out;
}

void MixedRadix::decode_into(std::size_t index, std::span<int> out) const {
  if (index >= size_) {
    throw DomainError("mixed-radix decode: index " + std::to_string(index) + " >= " +
                      std::to_string(size_));
  }
  for (std::size_t i = 0; i < radices_.size(); ++i) {
    out[i] = static_cast<int>(index / strides_[i]);
    index %= strides_[i];
  }
}

}  // namespace frl
