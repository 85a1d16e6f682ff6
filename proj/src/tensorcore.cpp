#include "manip/tensorcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace manip::tensorcore {

Parameter make_param(const std::string& name, std::vector<std::size_t> shape) {
  Parameter p;
  p.name = name;
  p.shape = std::move(shape);
  std::size_t n = 1;
  for (std::size_t d : p.shape) n *= d;
  p.value.assign(n, 0.0);
  p.grad.assign(n, 0.0);
  p.m.assign(n, 0.0);
  p.v.assign(n, 0.0);
  return p;
}

// ---------------------------------------------------------------------------
// tape

void Tape::clear() {
  nodes_.clear();
  data_.clear();
  grad_.clear();
  child_pool_.clear();
  param_nodes_.clear();
}

std::int32_t Tape::push(Op op, std::size_t len, std::int32_t a, std::int32_t b) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.len = len;
  n.off = data_.size();
  data_.resize(data_.size() + len, 0.0);
  grad_.resize(grad_.size() + len, 0.0);
  nodes_.push_back(n);
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

void Tape::check_same_len(Value a, Value b, const char* what) const {
  if (nodes_[a.id].len != nodes_[b.id].len) {
    throw logic_error(std::string(what) + ": shape mismatch (" +
                      std::to_string(nodes_[a.id].len) + " vs " +
                      std::to_string(nodes_[b.id].len) + ")");
  }
}

Value Tape::leaf(const std::vector<double>& data) {
  std::int32_t id = push(Op::Leaf, data.size(), -1, -1);
  std::copy(data.begin(), data.end(), mut_data(id));
  return {id};
}

Value Tape::leaf(double scalar) {
  std::int32_t id = push(Op::Leaf, 1, -1, -1);
  *mut_data(id) = scalar;
  return {id};
}

Value Tape::param(Parameter& p) {
  // one leaf per parameter per tape; parameter values stay fixed while a
  // tape is alive
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return {it->second};
  std::int32_t id = push(Op::Param, p.size(), -1, -1);
  std::copy(p.value.begin(), p.value.end(), mut_data(id));
  nodes_[id].param = &p;
  param_nodes_.emplace(&p, id);
  return {id};
}

Value Tape::add(Value a, Value b) {
  check_same_len(a, b, "add");
  std::int32_t id = push(Op::Add, nodes_[a.id].len, a.id, b.id);
  const double* x = data(a);
  const double* y = data(b);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = x[i] + y[i];
  return {id};
}

Value Tape::sub(Value a, Value b) {
  check_same_len(a, b, "sub");
  std::int32_t id = push(Op::Sub, nodes_[a.id].len, a.id, b.id);
  const double* x = data(a);
  const double* y = data(b);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = x[i] - y[i];
  return {id};
}

Value Tape::mul(Value a, Value b) {
  check_same_len(a, b, "mul");
  std::int32_t id = push(Op::Mul, nodes_[a.id].len, a.id, b.id);
  const double* x = data(a);
  const double* y = data(b);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = x[i] * y[i];
  return {id};
}

Value Tape::div(Value a, Value b) {
  check_same_len(a, b, "div");
  std::int32_t id = push(Op::Div, nodes_[a.id].len, a.id, b.id);
  const double* x = data(a);
  const double* y = data(b);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = x[i] / y[i];
  return {id};
}

Value Tape::neg(Value a) {
  std::int32_t id = push(Op::Neg, nodes_[a.id].len, a.id, -1);
  const double* x = data(a);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = -x[i];
  return {id};
}

Value Tape::scale(Value a, double c) {
  std::int32_t id = push(Op::Scale, nodes_[a.id].len, a.id, -1);
  nodes_[id].c0 = c;
  const double* x = data(a);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = c * x[i];
  return {id};
}

Value Tape::scale_by(Value a, Value s) {
  if (nodes_[s.id].len != 1) throw logic_error("scale_by: scale must be a length-1 value");
  std::int32_t id = push(Op::ScaleV, nodes_[a.id].len, a.id, s.id);
  const double* x = data(a);
  double sv = *data(s);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = sv * x[i];
  return {id};
}

Value Tape::add_const(Value a, double c) {
  std::int32_t id = push(Op::AddConst, nodes_[a.id].len, a.id, -1);
  nodes_[id].c0 = c;
  const double* x = data(a);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = x[i] + c;
  return {id};
}

Value Tape::matvec(Value w, std::size_t rows, std::size_t cols, Value x) {
  if (nodes_[w.id].len != rows * cols) throw logic_error("matvec: weight size mismatch");
  if (nodes_[x.id].len != cols) {
    throw logic_error("matvec: input length " + std::to_string(nodes_[x.id].len) +
                      " does not match cols " + std::to_string(cols));
  }
  std::int32_t id = push(Op::MatVec, rows, w.id, x.id);
  nodes_[id].aux0 = rows;
  nodes_[id].aux1 = cols;
  const double* W = data(w);
  const double* xv = data(x);
  double* out = mut_data(id);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = W + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * xv[c];
    out[r] = acc;
  }
  return {id};
}

Value Tape::dot(Value a, Value b) {
  check_same_len(a, b, "dot");
  std::int32_t id = push(Op::Dot, 1, a.id, b.id);
  const double* x = data(a);
  const double* y = data(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < nodes_[a.id].len; ++i) acc += x[i] * y[i];
  *mut_data(id) = acc;
  return {id};
}

Value Tape::sum(Value a) {
  std::int32_t id = push(Op::Sum, 1, a.id, -1);
  const double* x = data(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < nodes_[a.id].len; ++i) acc += x[i];
  *mut_data(id) = acc;
  return {id};
}

Value Tape::mean(Value a) {
  std::int32_t id = push(Op::Mean, 1, a.id, -1);
  const double* x = data(a);
  double acc = 0.0;
  std::size_t n = nodes_[a.id].len;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  *mut_data(id) = acc / static_cast<double>(n);
  return {id};
}

Value Tape::tanh(Value a) {
  std::int32_t id = push(Op::Tanh, nodes_[a.id].len, a.id, -1);
  const double* x = data(a);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = std::tanh(x[i]);
  return {id};
}

Value Tape::sigmoid(Value a) {
  std::int32_t id = push(Op::Sigmoid, nodes_[a.id].len, a.id, -1);
  const double* x = data(a);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return {id};
}

Value Tape::relu(Value a) {
  std::int32_t id = push(Op::Relu, nodes_[a.id].len, a.id, -1);
  const double* x = data(a);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return {id};
}

Value Tape::log(Value a) {
  std::int32_t id = push(Op::Log, nodes_[a.id].len, a.id, -1);
  const double* x = data(a);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = std::log(x[i]);
  return {id};
}

Value Tape::sqrt(Value a) {
  std::int32_t id = push(Op::Sqrt, nodes_[a.id].len, a.id, -1);
  const double* x = data(a);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = std::sqrt(x[i]);
  return {id};
}

Value Tape::abs(Value a) {
  std::int32_t id = push(Op::Abs, nodes_[a.id].len, a.id, -1);
  const double* x = data(a);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = std::fabs(x[i]);
  return {id};
}

Value Tape::softmax(Value a) {
  std::int32_t id = push(Op::Softmax, nodes_[a.id].len, a.id, -1);
  const double* x = data(a);
  double* out = mut_data(id);
  std::size_t n = nodes_[id].len;
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= z;
  return {id};
}

Value Tape::min_ew(Value a, Value b) {
  check_same_len(a, b, "min_ew");
  std::int32_t id = push(Op::MinEw, nodes_[a.id].len, a.id, b.id);
  const double* x = data(a);
  const double* y = data(b);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = x[i] <= y[i] ? x[i] : y[i];
  return {id};
}

Value Tape::max_ew(Value a, Value b) {
  check_same_len(a, b, "max_ew");
  std::int32_t id = push(Op::MaxEw, nodes_[a.id].len, a.id, b.id);
  const double* x = data(a);
  const double* y = data(b);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = x[i] >= y[i] ? x[i] : y[i];
  return {id};
}

Value Tape::clamp(Value a, double lo, double hi) {
  std::int32_t id = push(Op::Clamp, nodes_[a.id].len, a.id, -1);
  nodes_[id].c0 = lo;
  nodes_[id].c1 = hi;
  const double* x = data(a);
  double* out = mut_data(id);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) out[i] = std::min(hi, std::max(lo, x[i]));
  return {id};
}

Value Tape::concat(const std::vector<Value>& parts) {
  if (parts.empty()) throw logic_error("concat: empty part list");
  std::size_t total = 0;
  for (Value p : parts) total += nodes_[p.id].len;
  std::int32_t id = push(Op::Concat, total, -1, -1);
  nodes_[id].aux0 = child_pool_.size();
  nodes_[id].aux1 = parts.size();
  for (Value p : parts) child_pool_.push_back(p.id);
  double* out = mut_data(id);
  std::size_t at = 0;
  for (Value p : parts) {
    const double* x = data(p);
    std::copy(x, x + nodes_[p.id].len, out + at);
    at += nodes_[p.id].len;
  }
  return {id};
}

Value Tape::slice(Value a, std::size_t start, std::size_t len) {
  if (start + len > nodes_[a.id].len) throw logic_error("slice: out of range");
  std::int32_t id = push(Op::Slice, len, a.id, -1);
  nodes_[id].aux0 = start;
  const double* x = data(a);
  std::copy(x + start, x + start + len, mut_data(id));
  return {id};
}

double Tape::scalar(Value v) const {
  if (nodes_[v.id].len != 1) throw logic_error("scalar: value is not length 1");
  return *data(v);
}

std::vector<double> Tape::to_vector(Value v) const {
  const double* x = data(v);
  return std::vector<double>(x, x + nodes_[v.id].len);
}

void Tape::backward(Value loss) {
  if (!loss.valid() || nodes_[loss.id].len != 1) {
    throw logic_error("backward: loss must be a scalar value");
  }
  std::fill(grad_.begin(), grad_.end(), 0.0);
  *mut_grad(loss.id) = 1.0;

  for (std::int32_t id = loss.id; id >= 0; --id) {
    const Node& n = nodes_[id];
    const double* g = grad_.data() + n.off;
    const double* out = data_.data() + n.off;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Param: {
        double* pg = n.param->grad.data();
        for (std::size_t i = 0; i < n.len; ++i) pg[i] += g[i];
        break;
      }
      case Op::Add: {
        double* ga = mut_grad(n.a);
        double* gb = mut_grad(n.b);
        for (std::size_t i = 0; i < n.len; ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::Sub: {
        double* ga = mut_grad(n.a);
        double* gb = mut_grad(n.b);
        for (std::size_t i = 0; i < n.len; ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::Mul: {
        double* ga = mut_grad(n.a);
        double* gb = mut_grad(n.b);
        const double* x = data_.data() + nodes_[n.a].off;
        const double* y = data_.data() + nodes_[n.b].off;
        for (std::size_t i = 0; i < n.len; ++i) {
          ga[i] += g[i] * y[i];
          gb[i] += g[i] * x[i];
        }
        break;
      }
      case Op::Div: {
        double* ga = mut_grad(n.a);
        double* gb = mut_grad(n.b);
        const double* x = data_.data() + nodes_[n.a].off;
        const double* y = data_.data() + nodes_[n.b].off;
        for (std::size_t i = 0; i < n.len; ++i) {
          ga[i] += g[i] / y[i];
          gb[i] -= g[i] * x[i] / (y[i] * y[i]);
        }
        break;
      }
      case Op::Neg: {
        double* ga = mut_grad(n.a);
        for (std::size_t i = 0; i < n.len; ++i) ga[i] -= g[i];
        break;
      }
      case Op::Scale: {
        double* ga = mut_grad(n.a);
        for (std::size_t i = 0; i < n.len; ++i) ga[i] += n.c0 * g[i];
        break;
      }
      case Op::AddConst: {
        double* ga = mut_grad(n.a);
        for (std::size_t i = 0; i < n.len; ++i) ga[i] += g[i];
        break;
      }
      case Op::ScaleV: {
        double* ga = mut_grad(n.a);
        double* gs = mut_grad(n.b);
        const double* x = data_.data() + nodes_[n.a].off;
        double sv = *(data_.data() + nodes_[n.b].off);
        double acc = 0.0;
        for (std::size_t i = 0; i < n.len; ++i) {
          ga[i] += g[i] * sv;
          acc += g[i] * x[i];
        }
        gs[0] += acc;
        break;
      }
      case Op::MatVec: {
        std::size_t rows = n.aux0, cols = n.aux1;
        double* gw = mut_grad(n.a);
        double* gx = mut_grad(n.b);
        const double* W = data_.data() + nodes_[n.a].off;
        const double* x = data_.data() + nodes_[n.b].off;
        for (std::size_t r = 0; r < rows; ++r) {
          double gr = g[r];
          if (gr == 0.0) continue;
          double* gwr = gw + r * cols;
          const double* Wr = W + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            gwr[c] += gr * x[c];
            gx[c] += gr * Wr[c];
          }
        }
        break;
      }
      case Op::Dot: {
        double* ga = mut_grad(n.a);
        double* gb = mut_grad(n.b);
        const double* x = data_.data() + nodes_[n.a].off;
        const double* y = data_.data() + nodes_[n.b].off;
        double gs = g[0];
        for (std::size_t i = 0; i < nodes_[n.a].len; ++i) {
          ga[i] += gs * y[i];
          gb[i] += gs * x[i];
        }
        break;
      }
      case Op::Sum: {
        double* ga = mut_grad(n.a);
        double gs = g[0];
        for (std::size_t i = 0; i < nodes_[n.a].len; ++i) ga[i] += gs;
        break;
      }
      case Op::Mean: {
        double* ga = mut_grad(n.a);
        double gs = g[0] / static_cast<double>(nodes_[n.a].len);
        for (std::size_t i = 0; i < nodes_[n.a].len; ++i) ga[i] += gs;
        break;
      }
      case Op::Tanh: {
        double* ga = mut_grad(n.a);
        for (std::size_t i = 0; i < n.len; ++i) ga[i] += g[i] * (1.0 - out[i] * out[i]);
        break;
      }
      case Op::Sigmoid: {
        double* ga = mut_grad(n.a);
        for (std::size_t i = 0; i < n.len; ++i) ga[i] += g[i] * out[i] * (1.0 - out[i]);
        break;
      }
      case Op::Relu: {
        double* ga = mut_grad(n.a);
        const double* x = data_.data() + nodes_[n.a].off;
        for (std::size_t i = 0; i < n.len; ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
        break;
      }
      case Op::Log: {
        double* ga = mut_grad(n.a);
        const double* x = data_.data() + nodes_[n.a].off;
        for (std::size_t i = 0; i < n.len; ++i) ga[i] += g[i] / x[i];
        break;
      }
      case Op::Sqrt: {
        double* ga = mut_grad(n.a);
        for (std::size_t i = 0; i < n.len; ++i) ga[i] += g[i] * 0.5 / out[i];
        break;
      }
      case Op::Abs: {
        double* ga = mut_grad(n.a);
        const double* x = data_.data() + nodes_[n.a].off;
        for (std::size_t i = 0; i < n.len; ++i) {
          ga[i] += x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
        }
        break;
      }
      case Op::Softmax: {
        double* ga = mut_grad(n.a);
        double gy = 0.0;
        for (std::size_t i = 0; i < n.len; ++i) gy += g[i] * out[i];
        for (std::size_t i = 0; i < n.len; ++i) ga[i] += out[i] * (g[i] - gy);
        break;
      }
      case Op::MinEw: {
        // ties route to the first operand
        double* ga = mut_grad(n.a);
        double* gb = mut_grad(n.b);
        const double* x = data_.data() + nodes_[n.a].off;
        const double* y = data_.data() + nodes_[n.b].off;
        for (std::size_t i = 0; i < n.len; ++i) {
          if (x[i] <= y[i]) ga[i] += g[i];
          else gb[i] += g[i];
        }
        break;
      }
      case Op::MaxEw: {
        double* ga = mut_grad(n.a);
        double* gb = mut_grad(n.b);
        const double* x = data_.data() + nodes_[n.a].off;
        const double* y = data_.data() + nodes_[n.b].off;
        for (std::size_t i = 0; i < n.len; ++i) {
          if (x[i] >= y[i]) ga[i] += g[i];
          else gb[i] += g[i];
        }
        break;
      }
      case Op::Clamp: {
        double* ga = mut_grad(n.a);
        const double* x = data_.data() + nodes_[n.a].off;
        for (std::size_t i = 0; i < n.len; ++i) {
          if (x[i] > n.c0 && x[i] < n.c1) ga[i] += g[i];
        }
        break;
      }
      case Op::Concat: {
        std::size_t at = 0;
        for (std::size_t k = 0; k < n.aux1; ++k) {
          std::int32_t child = child_pool_[n.aux0 + k];
          double* gc = mut_grad(child);
          std::size_t clen = nodes_[child].len;
          for (std::size_t i = 0; i < clen; ++i) gc[i] += g[at + i];
          at += clen;
        }
        break;
      }
      case Op::Slice: {
        double* ga = mut_grad(n.a);
        for (std::size_t i = 0; i < n.len; ++i) ga[n.aux0 + i] += g[i];
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// network blocks

namespace {

void init_uniform(Parameter& p, double bound, Rng& rng) {
  for (double& x : p.value) x = rng.uniform(-bound, bound);
}

}  // namespace

std::size_t DenseNet::param_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) n += (widths[i] + 1) * widths[i + 1];
  return n;
}

DenseNet make_dense(const std::string& name, const std::vector<std::size_t>& widths,
                    const std::vector<Activation>& activations, Rng& rng) {
  if (widths.size() < 2) throw logic_error("make_dense: need at least input and output widths");
  if (activations.size() != widths.size() - 1) {
    throw logic_error("make_dense: one activation per non-input layer required");
  }
  DenseNet net;
  net.widths = widths;
  net.activations = activations;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    Parameter w = make_param(name + ".w" + std::to_string(i), {widths[i + 1], widths[i]});
    double bound = std::sqrt(6.0 / static_cast<double>(widths[i] + widths[i + 1]));
    init_uniform(w, bound, rng);
    net.weights.push_back(std::move(w));
    net.biases.push_back(make_param(name + ".b" + std::to_string(i), {widths[i + 1]}));
  }
  return net;
}

Value forward(Tape& tape, DenseNet& net, Value x) {
  if (tape.len(x) != net.input_width()) {
    throw logic_error("forward: input length " + std::to_string(tape.len(x)) +
                      " does not match net input width " + std::to_string(net.input_width()));
  }
  Value h = x;
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    Value w = tape.param(net.weights[i]);
    Value b = tape.param(net.biases[i]);
    h = tape.add(tape.matvec(w, net.widths[i + 1], net.widths[i], h), b);
    switch (net.activations[i]) {
      case Activation::Tanh: h = tape.tanh(h); break;
      case Activation::Relu: h = tape.relu(h); break;
      case Activation::Identity: break;
    }
  }
  return h;
}

std::vector<double> forward(DenseNet& net, const std::vector<double>& x) {
  Tape tape;
  Value out = forward(tape, net, tape.leaf(x));
  return tape.to_vector(out);
}

RecurrentCell make_recurrent(const std::string& name, std::size_t input_size,
                             std::size_t hidden_size, Rng& rng) {
  RecurrentCell c;
  c.input_size = input_size;
  c.hidden_size = hidden_size;
  double bi = std::sqrt(6.0 / static_cast<double>(input_size + hidden_size));
  double bh = std::sqrt(6.0 / static_cast<double>(2 * hidden_size));
  auto mk = [&](const char* tag, std::size_t r, std::size_t cc, double bound) {
    Parameter p = make_param(name + "." + tag, {r, cc});
    init_uniform(p, bound, rng);
    return p;
  };
  c.wz = mk("wz", hidden_size, input_size, bi);
  c.uz = mk("uz", hidden_size, hidden_size, bh);
  c.bz = make_param(name + ".bz", {hidden_size});
  c.wr = mk("wr", hidden_size, input_size, bi);
  c.ur = mk("ur", hidden_size, hidden_size, bh);
  c.br = make_param(name + ".br", {hidden_size});
  c.wh = mk("wh", hidden_size, input_size, bi);
  c.uh = mk("uh", hidden_size, hidden_size, bh);
  c.bh = make_param(name + ".bh", {hidden_size});
  return c;
}

Value step(Tape& tape, RecurrentCell& cell, Value x, Value h) {
  std::size_t hs = cell.hidden_size, is = cell.input_size;
  auto gate = [&](Parameter& w, Parameter& u, Parameter& b) {
    return tape.add(tape.add(tape.matvec(tape.param(w), hs, is, x),
                             tape.matvec(tape.param(u), hs, hs, h)),
                    tape.param(b));
  };
  Value z = tape.sigmoid(gate(cell.wz, cell.uz, cell.bz));
  Value r = tape.sigmoid(gate(cell.wr, cell.ur, cell.br));
  Value rh = tape.mul(r, h);
  Value cand = tape.tanh(tape.add(
      tape.add(tape.matvec(tape.param(cell.wh), hs, is, x),
               tape.matvec(tape.param(cell.uh), hs, hs, rh)),
      tape.param(cell.bh)));
  // h' = (1-z)*h + z*cand
  Value one_minus_z = tape.add_const(tape.neg(z), 1.0);
  return tape.add(tape.mul(one_minus_z, h), tape.mul(z, cand));
}

Embedding make_embedding(const std::string& name, std::size_t rows, std::size_t dim, Rng& rng) {
  Embedding e;
  e.rows = rows;
  e.dim = dim;
  e.table = make_param(name, {rows, dim});
  for (double& x : e.table.value) x = 0.1 * rng.gauss();
  return e;
}

Value lookup(Tape& tape, Embedding& emb, std::size_t row) {
  if (row >= emb.rows) throw logic_error("lookup: row out of range");
  return tape.slice(tape.param(emb.table), row * emb.dim, emb.dim);
}

// ---------------------------------------------------------------------------
// optimizer

void Optimizer::add(DenseNet& net) {
  for (auto& p : net.weights) add(p);
  for (auto& p : net.biases) add(p);
}

void Optimizer::add(RecurrentCell& c) {
  for (Parameter* p : {&c.wz, &c.uz, &c.bz, &c.wr, &c.ur, &c.br, &c.wh, &c.uh, &c.bh}) add(*p);
}

void Optimizer::add(Embedding& e) { add(e.table); }

void Optimizer::step() {
  ++step_count;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      double g = p->grad[i];
      if (!std::isfinite(g)) {
        throw numeric_error("non-finite gradient in parameter '" + p->name + "' at index " +
                            std::to_string(i));
      }
      p->m[i] = beta1 * p->m[i] + (1.0 - beta1) * g;
      p->v[i] = beta2 * p->v[i] + (1.0 - beta2) * g * g;
      double mhat = p->m[i] / bc1;
      double vhat = p->v[i] / bc2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    p->zero_grad();
  }
}

void Optimizer::zero_grad() {
  for (Parameter* p : params) p->zero_grad();
}

// ---------------------------------------------------------------------------
// checkpoints

void ParamRegistry::add(DenseNet& net) {
  for (auto& p : net.weights) add(p);
  for (auto& p : net.biases) add(p);
}

void ParamRegistry::add(RecurrentCell& c) {
  for (Parameter* p : {&c.wz, &c.uz, &c.bz, &c.wr, &c.ur, &c.br, &c.wh, &c.uh, &c.bh}) add(*p);
}

void ParamRegistry::add(Embedding& e) { add(e.table); }

Parameter* ParamRegistry::find(const std::string& name) const {
  for (Parameter* p : params) {
    if (p->name == name) return p;
  }
  return nullptr;
}

void save_checkpoint(const std::string& path, const ParamRegistry& reg,
                     const std::vector<std::pair<std::string, std::string>>& meta) {
  nlohmann::json arrays = nlohmann::json::object();
  for (const Parameter* p : reg.params) {
    arrays[p->name] = {{"shape", p->shape}, {"data", p->value}};
  }
  nlohmann::json j = {{"version", 1}, {"arrays", arrays}};
  nlohmann::json jm = nlohmann::json::object();
  for (const auto& [k, v] : meta) jm[k] = v;
  j["meta"] = jm;
  std::ofstream out(path);
  if (!out) throw data_error("cannot open checkpoint for writing: " + path);
  out << j.dump() << "\n";
}

namespace {

nlohmann::json read_checkpoint_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw data_error("malformed checkpoint " + path + ": " + e.what());
  }
  if (!j.contains("version")) throw data_error("checkpoint missing version field: " + path);
  if (j["version"].get<int>() != 1) {
    throw data_error("unsupported checkpoint version in " + path);
  }
  return j;
}

}  // namespace

void load_checkpoint(const std::string& path, ParamRegistry& reg) {
  nlohmann::json j = read_checkpoint_json(path);
  const auto& arrays = j.at("arrays");
  for (Parameter* p : reg.params) {
    if (!arrays.contains(p->name)) {
      throw data_error("checkpoint " + path + " missing array '" + p->name + "'");
    }
    const auto& a = arrays.at(p->name);
    auto shape = a.at("shape").get<std::vector<std::size_t>>();
    if (shape != p->shape) throw data_error("shape mismatch for array '" + p->name + "'");
    auto data = a.at("data").get<std::vector<double>>();
    if (data.size() != p->size()) throw data_error("size mismatch for array '" + p->name + "'");
    p->value = std::move(data);
  }
}

std::vector<std::pair<std::string, std::string>> read_checkpoint_meta(const std::string& path) {
  nlohmann::json j = read_checkpoint_json(path);
  std::vector<std::pair<std::string, std::string>> out;
  if (j.contains("meta")) {
    for (auto it = j["meta"].begin(); it != j["meta"].end(); ++it) {
      out.emplace_back(it.key(), it.value().get<std::string>());
    }
  }
  return out;
}

std::uint64_t param_hash(const ParamRegistry& reg) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* bytes, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const Parameter* p : reg.params) {
    mix(p->name.data(), p->name.size());
    mix(p->value.data(), p->value.size() * sizeof(double));
  }
  return h;
}

}  // namespace manip::tensorcore
