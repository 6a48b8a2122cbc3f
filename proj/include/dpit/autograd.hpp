#pragma once

#include <atomic>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "dpit/tensor.hpp"

namespace dpit {

/// Test hook: scales the upstream gradient seen by one named backward rule.
/// Used to demonstrate that gradient checking detects a broken rule.
class BackwardFault {
 public:
  static void set(std::string op_name, double factor = 1.5) {
    std::lock_guard lock(mutex());
    name() = std::move(op_name);
    factor_ref() = factor;
    armed().store(!name().empty());
  }
  static void clear() { set(""); }

  /// Factor to apply to ops called `op`, or 1 when no fault matches.
  static double factor_for(std::string_view op) {
    if (!armed().load(std::memory_order_relaxed)) return 1.0;
    std::lock_guard lock(mutex());
    return name() == op ? factor_ref() : 1.0;
  }

 private:
  static std::mutex& mutex() {
    static std::mutex m;
    return m;
  }
  static std::string& name() {
    static std::string n;
    return n;
  }
  static double& factor_ref() {
    static double f = 1.0;
    return f;
  }
  static std::atomic<bool>& armed() {
    static std::atomic<bool> a{false};
    return a;
  }
};

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  /// Accumulated gradient; zero-filled when nothing flowed into this value.
  Tensor<T> grad() const { return tape_->grad_or_zero(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of operations for reverse-mode differentiation.
///
/// Values live in a deque so references stay valid while the tape grows.
/// Operations are appended after their inputs exist, so the recording order
/// is already topological and `backward` simply replays it in reverse.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t /*output id*/)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, false});
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Appends `out` as the result of an op over `inputs`. The backward rule is
  /// kept only when some input participates in differentiation.
  Var<T> record(Tensor<T> out, std::initializer_list<Var<T>> inputs, BackwardFn backward,
                const char* name) {
    return record(std::move(out), std::vector<Var<T>>(inputs), std::move(backward), name);
  }

  Var<T> record(Tensor<T> out, const std::vector<Var<T>>& inputs, BackwardFn backward,
                const char* name) {
    bool needs = false;
    for (const auto& in : inputs) {
      if (&in.tape() != this) throw Error(std::string(name) + ": operands live on different tapes");
      needs = needs || requires_grad(in.id());
    }
    nodes_.push_back(Node{std::move(out), {}, needs, false});
    const std::size_t id = nodes_.size() - 1;
    if (needs && recording_) {
      records_.push_back(Record{id, std::move(backward), BackwardFault::factor_for(name)});
    }
    return Var<T>(this, id);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool has_grad(std::size_t id) const { return nodes_.at(id).has_grad; }

  const Tensor<T>& grad(std::size_t id) const { return nodes_.at(id).grad; }

  Tensor<T> grad_or_zero(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.has_grad ? n.grad : Tensor<T>(n.value.shape());
  }

  /// Gradient buffer of `id`, zero-initialised on first touch.
  Tensor<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.has_grad) {
      n.grad = Tensor<T>(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Reverse sweep from a scalar output.
  void backward(Var<T> loss) {
    if (loss.value().size() != 1) {
      throw DimensionError("backward requires a scalar output, got " + to_string(loss.shape()));
    }
    if (!requires_grad(loss.id())) return;
    grad_buffer(loss.id())[0] += T(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (it->output > loss.id() || !has_grad(it->output)) continue;
      if (it->fault != 1.0) {
        Tensor<T> scaled = grad(it->output);
        for (auto& v : scaled.data()) v *= static_cast<T>(it->fault);
        std::swap(nodes_[it->output].grad, scaled);
        it->backward(*this, it->output);
        std::swap(nodes_[it->output].grad, scaled);
      } else {
        it->backward(*this, it->output);
      }
    }
  }

  /// Disables recording of backward rules (inference).
  void set_recording(bool on) { recording_ = on; }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t record_count() const { return records_.size(); }

  /// Output ids of the recorded operations, in recording order.
  std::vector<std::size_t> recorded_outputs() const {
    std::vector<std::size_t> ids;
    ids.reserve(records_.size());
    for (const auto& r : records_) ids.push_back(r.output);
    return ids;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad;
    bool has_grad;
  };
  struct Record {
    std::size_t output;
    BackwardFn backward;
    double fault;
  };

  std::deque<Node> nodes_;
  std::vector<Record> records_;
  bool recording_ = true;
};

}  // namespace dpit
