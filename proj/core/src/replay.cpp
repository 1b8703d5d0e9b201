#include "frl/agents/replay.hpp"

#include "frl/error.hpp"

namespace frl::agents {

RingBuffer::RingBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay capacity must be positive");
}

void RingBuffer::push(TransitionRecord r) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(r));
  } else {
    data_[head_] = std::move(r);
    head_ = (head_ + 1) % capacity_;
  }
}

const TransitionRecord& RingBuffer::at(std::size_t i) const {
  if (i >= data_.size()) throw DomainError("replay index out of range");
  return data_[(head_ + i) % data_.size()];
}

std::vector<std::size_t> RingBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (data_.empty()) throw StateError("cannot sample from an empty buffer");
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = static_cast<std::size_t>(uniform_index(rng, data_.size()));
  return out;
}

ReplayBuffers::ReplayBuffers(std::size_t num_blocks, std::size_t capacity)
    : global_(capacity), blocks_(num_blocks, RingBuffer(capacity)) {}

void ReplayBuffers::add(TransitionRecord r) {
  if (r.block_tag) {
    if (*r.block_tag >= blocks_.size()) throw DomainError("block tag out of range");
    blocks_[*r.block_tag].push(r);
  }
  global_.push(std::move(r));
}

namespace {

template <class Get>
Batch build(std::size_t n, Get&& get) {
  Batch b;
  if (n == 0) throw ShapeError("empty batch");
  const auto dim = static_cast<Eigen::Index>(get(0).state.size());
  const auto cols = static_cast<Eigen::Index>(n);
  b.states.resize(dim, cols);
  b.next_states.resize(dim, cols);
  b.rewards.resize(cols);
  b.dones.resize(cols);
  for (std::size_t i = 0; i < n; ++i) {
    const TransitionRecord& r = get(i);
    const auto c = static_cast<Eigen::Index>(i);
    if (static_cast<Eigen::Index>(r.state.size()) != dim || static_cast<Eigen::Index>(r.next_state.size()) != dim) {
      throw ShapeError("records in a batch differ in state dimension");
    }
    b.states.col(c) = Eigen::Map<const approx::Vector>(r.state.data(), dim);
    b.next_states.col(c) = Eigen::Map<const approx::Vector>(r.next_state.data(), dim);
    b.rewards(c) = r.reward;
    b.dones(c) = r.done ? 1.0 : 0.0;
    b.actions.push_back(r.action);
    b.state_index.push_back(r.state_index);
    b.next_state_index.push_back(r.next_state_index);
  }
  return b;
}

}  // namespace

Batch make_batch(const RingBuffer& buf, const std::vector<std::size_t>& idx) {
  return build(idx.size(), [&](std::size_t i) -> const TransitionRecord& { return buf.at(idx[i]); });
}

Batch make_batch(const std::vector<TransitionRecord>& records) {
  return build(records.size(), [&](std::size_t i) -> const TransitionRecord& { return records[i]; });
}

std::vector<TransitionRecord> to_records(const Batch& b) {
  std::vector<TransitionRecord> out(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    auto& r = out[i];
    r.state.assign(b.states.col(c).data(), b.states.col(c).data() + b.states.rows());
    r.next_state.assign(b.next_states.col(c).data(), b.next_states.col(c).data() + b.next_states.rows());
    r.action = b.actions[i];
    r.reward = b.rewards(c);
    r.done = b.dones(c) > 0.5;
    r.origin = b.block ? TransitionRecord::Origin::augmented : TransitionRecord::Origin::environment;
    r.block_tag = b.block;
    r.state_index = b.state_index[i];
    r.next_state_index = b.next_state_index[i];
  }
  return out;
}

}  // namespace frl::agents
