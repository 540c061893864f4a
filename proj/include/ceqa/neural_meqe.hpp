#pragma once

// Query encoder: GQE-style projection / DeepSets intersection operators with
// a key-value memory over informational atomics, full-softmax scoring and
// cross-entropy loss. Gradients come from a small reverse-mode tape that
// records exactly these operators.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ceqa/query_lang.hpp"
#include "ceqa/types.hpp"

namespace ceqa::nn {

using Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Ablation : std::uint8_t { None, NoFfn, RandomConstraints, NoMemory };

std::string_view ablation_name(Ablation a);
Ablation parse_ablation(std::string_view s);

struct EncoderOptions {
  Ablation ablation = Ablation::None;
  bool softmax_scores = false;     // normalise relevance scores over the bank
  bool memory_on_anchors = false;  // also read memory after anchor embeddings
};

template <typename Scalar>
struct ModelParams {
  Matrix<Scalar> entity;    // |V| x d, row v is e_v
  Matrix<Scalar> relation;  // 14 x d
  std::vector<Matrix<Scalar>> proj_weight;  // 14 of d x d
  std::vector<Vector<Scalar>> proj_bias;    // 14 of d
  Matrix<Scalar> inter_in_weight;
  Vector<Scalar> inter_in_bias;
  Matrix<Scalar> inter_out_weight;
  Vector<Scalar> inter_out_bias;
  Matrix<Scalar> ffn_hidden_weight;
  Vector<Scalar> ffn_hidden_bias;
  Matrix<Scalar> ffn_out_weight;
  Vector<Scalar> ffn_out_bias;

  Index dim() const { return entity.cols(); }
  Index num_vertices() const { return entity.rows(); }

  static ModelParams zeros(Index num_vertices, Index dim) {
    ModelParams p;
    p.entity = Matrix<Scalar>::Zero(num_vertices, dim);
    p.relation = Matrix<Scalar>::Zero(static_cast<Index>(kNumRelations), dim);
    p.proj_weight.assign(kNumRelations, Matrix<Scalar>::Zero(dim, dim));
    p.proj_bias.assign(kNumRelations, Vector<Scalar>::Zero(dim));
    p.inter_in_weight = p.inter_out_weight = Matrix<Scalar>::Zero(dim, dim);
    p.ffn_hidden_weight = p.ffn_out_weight = Matrix<Scalar>::Zero(dim, dim);
    p.inter_in_bias = p.inter_out_bias = Vector<Scalar>::Zero(dim);
    p.ffn_hidden_bias = p.ffn_out_bias = Vector<Scalar>::Zero(dim);
    return p;
  }

  // f(name, Eigen::Map<Matrix>) over every parameter block in a fixed order.
  template <typename F>
  void for_each_block(F&& f) {
    auto map = [](auto& m) { return Eigen::Map<Matrix<Scalar>>(m.data(), m.rows(), m.cols()); };
    f(std::string("entity"), map(entity));
    f(std::string("relation"), map(relation));
    for (std::size_t r = 0; r < proj_weight.size(); ++r) {
      auto rel = std::string(relation_name(kAllRelations[r]));
      f("proj_weight." + rel, map(proj_weight[r]));
      f("proj_bias." + rel, map(proj_bias[r]));
    }
    f(std::string("inter_in_weight"), map(inter_in_weight));
    f(std::string("inter_in_bias"), map(inter_in_bias));
    f(std::string("inter_out_weight"), map(inter_out_weight));
    f(std::string("inter_out_bias"), map(inter_out_bias));
    f(std::string("ffn_hidden_weight"), map(ffn_hidden_weight));
    f(std::string("ffn_hidden_bias"), map(ffn_hidden_bias));
    f(std::string("ffn_out_weight"), map(ffn_out_weight));
    f(std::string("ffn_out_bias"), map(ffn_out_bias));
  }
  template <typename F>
  void for_each_block(F&& f) const {
    const_cast<ModelParams*>(this)->for_each_block(
        [&](const std::string& name, Eigen::Map<Matrix<Scalar>> m) {
          f(name, Eigen::Map<const Matrix<Scalar>>(m.data(), m.rows(), m.cols()));
        });
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    auto out = ModelParams<Other>::zeros(num_vertices(), dim());
    std::vector<Eigen::Map<const Matrix<Scalar>>> src;
    for_each_block([&](const std::string&, auto m) { src.push_back(m); });
    std::size_t i = 0;
    out.for_each_block([&](const std::string&, auto m) { m = src[i++].template cast<Other>(); });
    return out;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_block([&](const std::string&, auto m) { ok = ok && m.allFinite(); });
    return ok;
  }
};

// Uniform(-1/sqrt(d), 1/sqrt(d)) everywhere except the memory FFN output
// map, which starts at zero so the memory is an identity residual.
template <typename Scalar>
ModelParams<Scalar> init_params(Index num_vertices, Index dim, std::uint64_t seed) {
  if (dim < 1) throw Error("embedding dimension must be >= 1");
  auto p = ModelParams<Scalar>::zeros(num_vertices, dim);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  p.for_each_block([&](const std::string& name, Eigen::Map<Matrix<Scalar>> m) {
    if (name.rfind("ffn_out", 0) == 0) return;
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i)
        m(i, j) = static_cast<Scalar>((2.0 * rng.uniform01() - 1.0) * bound);
  });
  return p;
}

// Handle to a value recorded on a tape.
struct QueryState {
  std::size_t index = 0;
};

template <typename Scalar>
struct MemoryReadout {
  Vector<Scalar> scores;     // s_m, one per atomic
  Vector<Scalar> aggregate;  // v
  Vector<Scalar> delta;      // added to the query
};

// Memory entries: keys E[head], values R[rel] + E[tail], read live from the
// parameter tables so gradients reach the shared embeddings.
struct MemoryBank {
  std::vector<InformationalAtomic> atomics;
  std::size_t size() const { return atomics.size(); }
};

template <typename Scalar>
class Tape {
 public:
  explicit Tape(const ModelParams<Scalar>& params) : params_(params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const ModelParams<Scalar>& params() const { return params_; }
  const Vector<Scalar>& value(QueryState q) const { return values_.at(q.index); }

  // Arithmetic work recorded so far (multiply-adds, roughly).
  std::size_t op_count() const { return ops_; }

  QueryState constant(Vector<Scalar> v) { return push(std::move(v), {}); }

  QueryState entity(VertexId v) {
    check_vertex(v);
    return push(params_.entity.row(v).transpose(),
                [this, v](std::size_t self) { grads_.entity.row(v) += grad(self).transpose(); });
  }

  // q' = W_rel q + b_rel + e_rel
  QueryState project(QueryState q, RelationType rel) {
    const auto r = index_of(rel);
    const auto& w = params_.proj_weight[r];
    Vector<Scalar> out = w * value(q) + params_.proj_bias[r] + params_.relation.row(static_cast<Index>(r)).transpose();
    const Index d = params_.dim();
    ops_ += static_cast<std::size_t>(d * d + 2 * d);
    return push(std::move(out), [this, q, r](std::size_t self) {
      const auto& g = grad(self);
      grads_.proj_weight[r].noalias() += g * value(q).transpose();
      grads_.proj_bias[r] += g;
      grads_.relation.row(static_cast<Index>(r)) += g.transpose();
      grad(q.index).noalias() += params_.proj_weight[r].transpose() * g;
    });
  }

  // q' = W_out mean_k relu(W_in q_k + b_in) + b_out
  QueryState intersect(std::span<const QueryState> inputs) {
    if (inputs.size() < 2) throw Error("intersection needs at least two inputs");
    const Index d = params_.dim();
    const auto k = static_cast<Scalar>(inputs.size());
    std::vector<QueryState> in(inputs.begin(), inputs.end());
    std::vector<Vector<Scalar>> pre;
    Vector<Scalar> mean = Vector<Scalar>::Zero(d);
    for (auto q : in) {
      pre.push_back(params_.inter_in_weight * value(q) + params_.inter_in_bias);
      mean += pre.back().cwiseMax(Scalar(0));
    }
    mean /= k;
    Vector<Scalar> out = params_.inter_out_weight * mean + params_.inter_out_bias;
    ops_ += static_cast<std::size_t>(in.size() * static_cast<std::size_t>(d * d + 3 * d) +
                                     static_cast<std::size_t>(d * d + d));
    return push(std::move(out), [this, in = std::move(in), pre = std::move(pre), mean, k](std::size_t self) {
      const auto& g = grad(self);
      grads_.inter_out_weight.noalias() += g * mean.transpose();
      grads_.inter_out_bias += g;
      Vector<Scalar> gmean = params_.inter_out_weight.transpose() * g / k;
      for (std::size_t i = 0; i < in.size(); ++i) {
        Vector<Scalar> gpre = (pre[i].array() > Scalar(0)).select(gmean, Scalar(0));
        grads_.inter_in_weight.noalias() += gpre * value(in[i]).transpose();
        grads_.inter_in_bias += gpre;
        grad(in[i].index).noalias() += params_.inter_in_weight.transpose() * gpre;
      }
    });
  }

  // s_m = <q, E[h_m]>; v = sum_m s_m (R[r_m] + E[t_m]); q' = q + FFN(v).
  // With use_ffn = false the aggregate is added directly.
  std::pair<QueryState, MemoryReadout<Scalar>> memory_read(QueryState q, const MemoryBank& bank,
                                                           bool use_ffn, bool softmax_scores) {
    const Index d = params_.dim();
    MemoryReadout<Scalar> readout;
    const auto m_count = static_cast<Index>(bank.size());
    readout.scores = Vector<Scalar>::Zero(m_count);
    readout.aggregate = Vector<Scalar>::Zero(d);
    readout.delta = Vector<Scalar>::Zero(d);
    if (bank.size() == 0) return {q, readout};

    std::vector<Vector<Scalar>> values;
    for (Index m = 0; m < m_count; ++m) {
      const auto& a = bank.atomics[static_cast<std::size_t>(m)];
      check_vertex(a.head);
      check_vertex(a.tail);
      readout.scores(m) = value(q).dot(params_.entity.row(a.head).transpose());
      values.push_back(params_.relation.row(static_cast<Index>(index_of(a.rel))).transpose() +
                       params_.entity.row(a.tail).transpose());
    }
    Vector<Scalar> weights = readout.scores;
    if (softmax_scores) {
      weights = (readout.scores.array() - readout.scores.maxCoeff()).exp();
      weights /= weights.sum();
    }
    for (Index m = 0; m < m_count; ++m) readout.aggregate += weights(m) * values[static_cast<std::size_t>(m)];

    Vector<Scalar> hidden_pre;
    if (use_ffn) {
      hidden_pre = params_.ffn_hidden_weight * readout.aggregate + params_.ffn_hidden_bias;
      readout.delta = params_.ffn_out_weight * hidden_pre.cwiseMax(Scalar(0)) + params_.ffn_out_bias;
      ops_ += static_cast<std::size_t>(2 * d * d + 3 * d);
    } else {
      readout.delta = readout.aggregate;
    }
    ops_ += static_cast<std::size_t>(m_count * 3 * d + d);

    Vector<Scalar> out = value(q) + readout.delta;
    auto handle = push(std::move(out), [this, q, atomics = bank.atomics, values = std::move(values),
                                        weights, aggregate = readout.aggregate,
                                        hidden_pre = std::move(hidden_pre), use_ffn,
                                        softmax_scores](std::size_t self) {
      const auto& g = grad(self);
      grad(q.index) += g;
      Vector<Scalar> gagg;
      if (use_ffn) {
        Vector<Scalar> hidden = hidden_pre.cwiseMax(Scalar(0));
        grads_.ffn_out_weight.noalias() += g * hidden.transpose();
        grads_.ffn_out_bias += g;
        Vector<Scalar> ghidden = params_.ffn_out_weight.transpose() * g;
        Vector<Scalar> gpre = (hidden_pre.array() > Scalar(0)).select(ghidden, Scalar(0));
        grads_.ffn_hidden_weight.noalias() += gpre * aggregate.transpose();
        grads_.ffn_hidden_bias += gpre;
        gagg = params_.ffn_hidden_weight.transpose() * gpre;
      } else {
        gagg = g;
      }
      const auto m_count = static_cast<Index>(atomics.size());
      Vector<Scalar> gweights(m_count);
      for (Index m = 0; m < m_count; ++m) {
        const auto& a = atomics[static_cast<std::size_t>(m)];
        gweights(m) = gagg.dot(values[static_cast<std::size_t>(m)]);
        grads_.relation.row(static_cast<Index>(index_of(a.rel))) += weights(m) * gagg.transpose();
        grads_.entity.row(a.tail) += weights(m) * gagg.transpose();
      }
      Vector<Scalar> gscores = gweights;
      if (softmax_scores)
        gscores = (weights.array() * (gweights.array() - weights.dot(gweights))).matrix();
      for (Index m = 0; m < m_count; ++m) {
        const auto& a = atomics[static_cast<std::size_t>(m)];
        grad(q.index) += gscores(m) * params_.entity.row(a.head).transpose();
        grads_.entity.row(a.head) += gscores(m) * value(q).transpose();
      }
    });
    return {handle, readout};
  }

  // -(1/N) sum_i log softmax(E q_i)[answer_i]; recorded as the tape's loss.
  Scalar cross_entropy(std::span<const std::pair<QueryState, VertexId>> batch) {
    if (batch.empty()) throw Error("loss needs at least one pair");
    if (has_loss_) throw Error("tape already holds a loss");
    const auto n = static_cast<Scalar>(batch.size());
    Scalar total = 0;
    loss_terms_.clear();
    for (const auto& [q, answer] : batch) {
      check_vertex(answer);
      Vector<Scalar> scores = params_.entity * value(q);
      Scalar shift = scores.maxCoeff();
      Vector<Scalar> p = (scores.array() - shift).exp();
      Scalar z = p.sum();
      p /= z;
      total -= scores(answer) - shift - std::log(z);
      p(answer) -= Scalar(1);
      loss_terms_.push_back({q, std::move(p)});
    }
    loss_ = total / n;
    loss_scale_ = Scalar(1) / n;
    has_loss_ = true;
    return loss_;
  }

  Scalar loss() const {
    if (!has_loss_) throw Error("no loss recorded");
    return loss_;
  }

  // Reverse sweep; gradients are aligned with the parameter blocks.
  ModelParams<Scalar> backward() {
    if (!has_loss_) throw Error("backward called before a loss was recorded");
    if (consumed_) throw Error("backward already run on this tape");
    consumed_ = true;
    grads_ = ModelParams<Scalar>::zeros(params_.num_vertices(), params_.dim());
    grad_values_.clear();
    for (const auto& v : values_) grad_values_.push_back(Vector<Scalar>::Zero(v.size()));
    for (const auto& [q, dscores] : loss_terms_) {
      Vector<Scalar> gs = dscores * loss_scale_;
      grad(q.index).noalias() += params_.entity.transpose() * gs;
      grads_.entity.noalias() += gs * value(q).transpose();
    }
    for (std::size_t i = values_.size(); i-- > 0;)
      if (backward_[i]) backward_[i](i);
    return std::move(grads_);
  }

 private:
  using Backward = std::function<void(std::size_t)>;

  QueryState push(Vector<Scalar> v, Backward back) {
    values_.push_back(std::move(v));
    backward_.push_back(std::move(back));
    return {values_.size() - 1};
  }

  Vector<Scalar>& grad(std::size_t i) { return grad_values_[i]; }

  void check_vertex(VertexId v) const {
    if (static_cast<Index>(v) >= params_.num_vertices()) throw Error("vertex id out of range for model");
  }

  const ModelParams<Scalar>& params_;
  std::vector<Vector<Scalar>> values_;
  std::vector<Backward> backward_;
  std::vector<Vector<Scalar>> grad_values_;
  std::vector<std::pair<QueryState, Vector<Scalar>>> loss_terms_;
  ModelParams<Scalar> grads_;
  Scalar loss_ = 0;
  Scalar loss_scale_ = 0;
  bool has_loss_ = false;
  bool consumed_ = false;
  std::size_t ops_ = 0;
};

template <typename Scalar>
QueryState project(Tape<Scalar>& tape, QueryState q, RelationType rel) {
  return tape.project(q, rel);
}

template <typename Scalar>
QueryState intersect(Tape<Scalar>& tape, std::span<const QueryState> inputs) {
  return tape.intersect(inputs);
}

template <typename Scalar>
std::pair<QueryState, MemoryReadout<Scalar>> memory_read(Tape<Scalar>& tape, QueryState q,
                                                         const MemoryBank& bank,
                                                         const EncoderOptions& opts = {}) {
  if (opts.ablation == Ablation::NoMemory) return tape.memory_read(q, MemoryBank{}, true, false);
  return tape.memory_read(q, bank, opts.ablation != Ablation::NoFfn, opts.softmax_scores);
}

namespace detail {
template <typename Scalar>
QueryState encode_node(Tape<Scalar>& tape, const GroundedNode& n, const MemoryBank& bank,
                       const EncoderOptions& opts) {
  QueryState out;
  switch (n.op) {
    case NodeOp::Anchor:
      out = tape.entity(n.anchor);
      if (!opts.memory_on_anchors) return out;
      break;
    case NodeOp::Projection:
      out = tape.project(encode_node(tape, n.children.front(), bank, opts), n.rel);
      break;
    case NodeOp::Intersection: {
      std::vector<QueryState> children;
      for (const auto& ch : n.children) children.push_back(encode_node(tape, ch, bank, opts));
      out = tape.intersect(children);
      break;
    }
  }
  return memory_read(tape, out, bank, opts).first;
}
}  // namespace detail

// Post-order encoding; memory is read after every operator output.
template <typename Scalar>
QueryState encode(Tape<Scalar>& tape, const GroundedQuery& query, const MemoryBank& bank,
                  const EncoderOptions& opts = {}) {
  return detail::encode_node(tape, query.root(), bank, opts);
}

template <typename Scalar>
Vector<Scalar> score_all(const ModelParams<Scalar>& params, const Vector<Scalar>& q) {
  return params.entity * q;
}

template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& scores) {
  Vector<Scalar> p = (scores.array() - scores.maxCoeff()).exp();
  return p / p.sum();
}

// Convenience: encode without keeping gradients.
template <typename Scalar>
Vector<Scalar> encode_value(const ModelParams<Scalar>& params, const GroundedQuery& query,
                            const MemoryBank& bank, const EncoderOptions& opts = {}) {
  Tape<Scalar> tape(params);
  return tape.value(encode(tape, query, bank, opts));
}

}  // namespace ceqa::nn
