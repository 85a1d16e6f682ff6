#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "manip/error.hpp"
#include "manip/rng.hpp"

namespace manip::tensorcore {

// A named, trainable flat array. Lives outside any tape; tapes reference it
// through param() leaves and accumulate into grad on backward.
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;
  // adaptive moment state, owned here so the optimizer stays stateless per param
  std::vector<double> m;
  std::vector<double> v;

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

Parameter make_param(const std::string& name, std::vector<std::size_t> shape);

class Tape;

// Handle into a Tape. Valid until the owning tape is cleared.
struct Value {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

enum class Op : std::uint8_t {
  Leaf, Param, Add, Sub, Mul, Div, Neg, Scale, AddConst,
  MatVec, Dot, Sum, Mean, Tanh, Sigmoid, Relu, Log, Sqrt, Abs,
  Softmax, MinEw, MaxEw, Clamp, Concat, Slice, ScaleV,
};

// Single-threaded computation tape. Nodes are appended in topological order
// (operands always precede results), so backward is one reverse sweep and
// visits each node exactly once.
class Tape {
 public:
  Tape() = default;

  // drops all nodes; Values from before are invalid afterwards
  void clear();

  std::size_t node_count() const { return nodes_.size(); }

  Value leaf(const std::vector<double>& data);
  Value leaf(double scalar);
  // leaf bound to a parameter (copies value in; backward accumulates into p.grad)
  Value param(Parameter& p);

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value div(Value a, Value b);
  Value neg(Value a);
  Value scale(Value a, double c);
  // vector scaled by a length-1 value
  Value scale_by(Value a, Value s);
  Value add_const(Value a, double c);
  // W is a row-major (rows x cols) value; x has length cols
  Value matvec(Value w, std::size_t rows, std::size_t cols, Value x);
  Value dot(Value a, Value b);
  Value sum(Value a);
  Value mean(Value a);
  Value tanh(Value a);
  Value sigmoid(Value a);
  Value relu(Value a);
  Value log(Value a);
  Value sqrt(Value a);
  Value abs(Value a);
  Value softmax(Value a);
  Value min_ew(Value a, Value b);
  Value max_ew(Value a, Value b);
  Value clamp(Value a, double lo, double hi);
  Value concat(const std::vector<Value>& parts);
  Value slice(Value a, std::size_t start, std::size_t len);

  std::size_t len(Value v) const { return nodes_[v.id].len; }
  const double* data(Value v) const { return data_.data() + nodes_[v.id].off; }
  double scalar(Value v) const;
  std::vector<double> to_vector(Value v) const;

  // reverse-mode sweep from a scalar loss; accumulates into Parameter::grad
  void backward(Value loss);

 private:
  struct Node {
    Op op;
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::size_t off = 0;
    std::size_t len = 0;
    // op-specific: Scale/AddConst/Clamp constants, MatVec dims, Slice start,
    // Concat child range
    double c0 = 0.0, c1 = 0.0;
    std::size_t aux0 = 0, aux1 = 0;
    Parameter* param = nullptr;
  };

  std::int32_t push(Op op, std::size_t len, std::int32_t a, std::int32_t b);
  double* mut_data(std::int32_t id) { return data_.data() + nodes_[id].off; }
  double* mut_grad(std::int32_t id) { return grad_.data() + nodes_[id].off; }
  void check_same_len(Value a, Value b, const char* what) const;

  std::vector<Node> nodes_;
  std::vector<double> data_;
  std::vector<double> grad_;
  std::vector<std::int32_t> child_pool_;  // Concat children
  std::map<Parameter*, std::int32_t> param_nodes_;
};

// ---------------------------------------------------------------------------
// network building blocks

enum class Activation { Tanh, Relu, Identity };

// Fully-connected stack. widths = [in, h1, ..., out]; one activation per
// non-input layer.
struct DenseNet {
  std::vector<std::size_t> widths;
  std::vector<Activation> activations;
  std::vector<Parameter> weights;  // weights[i]: widths[i+1] x widths[i]
  std::vector<Parameter> biases;

  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  std::size_t param_count() const;
};

DenseNet make_dense(const std::string& name, const std::vector<std::size_t>& widths,
                    const std::vector<Activation>& activations, Rng& rng);

Value forward(Tape& tape, DenseNet& net, Value x);
// convenience: plain forward pass on a scratch tape
std::vector<double> forward(DenseNet& net, const std::vector<double>& x);

// Gated recurrent cell (update + reset gate pair).
struct RecurrentCell {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Parameter wz, uz, bz;  // update gate
  Parameter wr, ur, br;  // reset gate
  Parameter wh, uh, bh;  // candidate
};

RecurrentCell make_recurrent(const std::string& name, std::size_t input_size,
                             std::size_t hidden_size, Rng& rng);

Value step(Tape& tape, RecurrentCell& cell, Value x, Value h);

// Embedding table (rows x dim), looked up by row index.
struct Embedding {
  Parameter table;
  std::size_t rows = 0;
  std::size_t dim = 0;
};

Embedding make_embedding(const std::string& name, std::size_t rows, std::size_t dim, Rng& rng);

Value lookup(Tape& tape, Embedding& emb, std::size_t row);

// ---------------------------------------------------------------------------
// optimizer: adaptive moment estimation

struct Optimizer {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  std::vector<Parameter*> params;

  void add(Parameter& p) { params.push_back(&p); }
  void add(DenseNet& net);
  void add(RecurrentCell& cell);
  void add(Embedding& emb);
  // applies one update from accumulated grads, then clears them;
  // throws numeric_error naming the parameter on non-finite gradient
  void step();
  void zero_grad();
};

// ---------------------------------------------------------------------------
// checkpoints: named flat arrays with shapes, versioned

struct ParamRegistry {
  std::vector<Parameter*> params;

  void add(Parameter& p) { params.push_back(&p); }
  void add(DenseNet& net);
  void add(RecurrentCell& cell);
  void add(Embedding& emb);
  Parameter* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const ParamRegistry& reg,
                     const std::vector<std::pair<std::string, std::string>>& meta = {});
// loads into matching names; throws data_error on version/shape/name mismatch
void load_checkpoint(const std::string& path, ParamRegistry& reg);
std::vector<std::pair<std::string, std::string>> read_checkpoint_meta(const std::string& path);

// FNV-1a over the raw bytes of all parameter values, in registry order.
std::uint64_t param_hash(const ParamRegistry& reg);

}  // namespace manip::tensorcore
