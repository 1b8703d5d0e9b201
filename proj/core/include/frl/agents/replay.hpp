#pragma once

#include <optional>
#include <vector>

#include "frl/approx/mlp.hpp"
#include "frl/factored_mdp.hpp"
#include "frl/rng.hpp"

namespace frl::agents {

using mdp::JointAction;

struct TransitionRecord {
  enum class Origin { environment, augmented };
  std::vector<double> state;
  JointAction action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;  ///< next_state is absorbing
  Origin origin = Origin::environment;
  std::optional<std::size_t> block_tag;  ///< set for projected-action samples
  std::optional<std::size_t> state_index, next_state_index;
};

/// Fixed-capacity FIFO ring.
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity = 100'000);
  void push(TransitionRecord r);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }
  /// i-th oldest record.
  const TransitionRecord& at(std::size_t i) const;
  /// Uniform with replacement; throws StateError when empty.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<TransitionRecord> data_;
};

/// Global buffer D plus one buffer D_k per block for projected-action samples.
class ReplayBuffers {
 public:
  ReplayBuffers(std::size_t num_blocks, std::size_t capacity);
  /// Stores in D, and also in D_k when the record carries block tag k.
  void add(TransitionRecord r);
  const RingBuffer& global() const { return global_; }
  const RingBuffer& block(std::size_t k) const { return blocks_.at(k); }
  std::size_t num_blocks() const { return blocks_.size(); }

 private:
  RingBuffer global_;
  std::vector<RingBuffer> blocks_;
};

/// Column-batched view of transitions.
struct Batch {
  approx::Matrix states;       ///< dim x n
  approx::Matrix next_states;  ///< dim x n
  approx::RowVector rewards;
  approx::RowVector dones;     ///< 1 for absorbing next states
  std::vector<JointAction> actions;
  std::vector<std::optional<std::size_t>> state_index, next_state_index;
  std::optional<std::size_t> block;  ///< set on augmented batches
  std::size_t size() const { return actions.size(); }
};

Batch make_batch(const RingBuffer& buf, const std::vector<std::size_t>& idx);
Batch make_batch(const std::vector<TransitionRecord>& records);
std::vector<TransitionRecord> to_records(const Batch& b);

}  // namespace frl::agents
