#include <cmath>
#include <random>

#include "restfuzz/recommender.hpp"

namespace restfuzz {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd uniform(int rows, int cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

VectorXd sigmoid(const VectorXd& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

VectorXd softmax(const VectorXd& x) {
  const double m = x.maxCoeff();
  VectorXd e = (x.array() - m).exp().matrix();
  return e / e.sum();
}

// GRU activations for every input position. Column t of each matrix holds
// step t+1; `states` column t is h_{t+1} and h_0 = 0.
struct GruTrace {
  MatrixXd embedded, update, reset, cand, states;
};

GruTrace run_gru(const ModelParams& p, const std::vector<int>& inputs) {
  const int steps = static_cast<int>(inputs.size());
  GruTrace tr;
  tr.embedded.resize(p.embed, steps);
  tr.update.resize(p.hidden, steps);
  tr.reset.resize(p.hidden, steps);
  tr.cand.resize(p.hidden, steps);
  tr.states.resize(p.hidden, steps);
  VectorXd h = VectorXd::Zero(p.hidden);
  for (int t = 0; t < steps; ++t) {
    const VectorXd x = p.embedding.row(inputs[static_cast<std::size_t>(t)]).transpose();
    const VectorXd z = sigmoid(p.w_update * x + p.u_update * h + p.b_update.col(0));
    const VectorXd r = sigmoid(p.w_reset * x + p.u_reset * h + p.b_reset.col(0));
    const VectorXd n =
        (p.w_cand * x + p.u_cand * r.cwiseProduct(h) + p.b_cand.col(0)).array().tanh().matrix();
    h = (VectorXd::Ones(p.hidden) - z).cwiseProduct(n) + z.cwiseProduct(h);
    tr.embedded.col(t) = x;
    tr.update.col(t) = z;
    tr.reset.col(t) = r;
    tr.cand.col(t) = n;
    tr.states.col(t) = h;
  }
  return tr;
}

struct Prediction {
  VectorXd alpha;    // attention weights over states 1..t
  VectorXd context;
  VectorXd probs;
};

// Prediction after the first `t` states, using precomputed keys = W_a * states.
Prediction predict_at(const ModelParams& p, const GruTrace& tr, const MatrixXd& keys, int t) {
  const auto query = tr.states.col(t - 1);
  Prediction out;
  out.alpha = softmax(keys.leftCols(t).transpose() * query);
  out.context = tr.states.leftCols(t) * out.alpha;
  const VectorXd logits = p.w_out.leftCols(p.hidden) * out.context +
                          p.w_out.rightCols(p.hidden) * query + p.b_out.col(0);
  out.probs = softmax(logits);
  return out;
}

}  // namespace

ModelParams ModelParams::random(int vocab, int embed, int hidden, Rng& rng) {
  ModelParams p;
  p.vocab = vocab;
  p.embed = embed;
  p.hidden = hidden;
  const double gru_bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  const double out_bound = 1.0 / std::sqrt(2.0 * hidden);
  p.embedding = uniform(vocab, embed, 1.0, rng);
  p.w_update = uniform(hidden, embed, gru_bound, rng);
  p.w_reset = uniform(hidden, embed, gru_bound, rng);
  p.w_cand = uniform(hidden, embed, gru_bound, rng);
  p.u_update = uniform(hidden, hidden, gru_bound, rng);
  p.u_reset = uniform(hidden, hidden, gru_bound, rng);
  p.u_cand = uniform(hidden, hidden, gru_bound, rng);
  p.b_update = uniform(hidden, 1, gru_bound, rng);
  p.b_reset = uniform(hidden, 1, gru_bound, rng);
  p.b_cand = uniform(hidden, 1, gru_bound, rng);
  p.attention = uniform(hidden, hidden, gru_bound, rng);
  p.w_out = uniform(vocab, 2 * hidden, out_bound, rng);
  p.b_out = uniform(vocab, 1, out_bound, rng);
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams p = other;
  for (auto& [name, block] : p.blocks()) block->setZero();
  return p;
}

std::vector<std::pair<std::string, MatrixXd*>> ModelParams::blocks() {
  return {{"embedding", &embedding}, {"gru.w_update", &w_update}, {"gru.w_reset", &w_reset},
          {"gru.w_cand", &w_cand},   {"gru.u_update", &u_update}, {"gru.u_reset", &u_reset},
          {"gru.u_cand", &u_cand},   {"gru.b_update", &b_update}, {"gru.b_reset", &b_reset},
          {"gru.b_cand", &b_cand},   {"attention", &attention},   {"out.weight", &w_out},
          {"out.bias", &b_out}};
}

std::vector<std::pair<std::string, const MatrixXd*>> ModelParams::blocks() const {
  std::vector<std::pair<std::string, const MatrixXd*>> out;
  for (auto& [name, block] : const_cast<ModelParams*>(this)->blocks()) out.emplace_back(name, block);
  return out;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, block] : blocks())
    if (!block->allFinite()) return false;
  return true;
}

VectorXd forward(const ModelParams& params, const std::vector<int>& prefix) {
  if (prefix.empty()) throw std::invalid_argument("forward: empty prefix");
  for (int id : prefix)
    if (id < 0 || id >= params.vocab) throw std::out_of_range("forward: token id out of range");
  const auto tr = run_gru(params, prefix);
  const MatrixXd keys = params.attention * tr.states;
  return predict_at(params, tr, keys, static_cast<int>(prefix.size())).probs;
}

double loss_and_gradients(const ModelParams& p, const TrainingExample& example, ModelParams* g,
                          int* positions) {
  const int steps = static_cast<int>(example.size()) - 1;
  if (positions) *positions = std::max(steps, 0);
  if (steps <= 0) return 0.0;
  const std::vector<int> inputs(example.begin(), example.end() - 1);
  const auto tr = run_gru(p, inputs);
  const MatrixXd keys = p.attention * tr.states;
  const int H = p.hidden;

  double loss = 0.0;
  MatrixXd d_states = MatrixXd::Zero(H, steps);
  for (int t = 1; t <= steps; ++t) {
    const auto pred = predict_at(p, tr, keys, t);
    const int target = example[static_cast<std::size_t>(t)];
    loss -= std::log(std::max(pred.probs(target), 1e-300));
    if (!g) continue;

    VectorXd d_logits = pred.probs;
    d_logits(target) -= 1.0;
    const auto query = tr.states.col(t - 1);
    g->w_out.leftCols(H).noalias() += d_logits * pred.context.transpose();
    g->w_out.rightCols(H).noalias() += d_logits * query.transpose();
    g->b_out.col(0) += d_logits;

    const VectorXd d_context = p.w_out.leftCols(H).transpose() * d_logits;
    VectorXd d_query = p.w_out.rightCols(H).transpose() * d_logits;

    // context = sum_j alpha_j h_j
    const VectorXd d_alpha = tr.states.leftCols(t).transpose() * d_context;
    d_states.leftCols(t).noalias() += d_context * pred.alpha.transpose();
    // alpha = softmax(scores)
    const VectorXd d_scores =
        pred.alpha.cwiseProduct(d_alpha - VectorXd::Constant(t, pred.alpha.dot(d_alpha)));
    // scores_j = query . (W_a h_j)
    d_query.noalias() += keys.leftCols(t) * d_scores;
    g->attention.noalias() += query * (tr.states.leftCols(t) * d_scores).transpose();
    d_states.leftCols(t).noalias() += (p.attention.transpose() * query) * d_scores.transpose();
    d_states.col(t - 1) += d_query;
  }
  if (!g) return loss;

  VectorXd d_next = VectorXd::Zero(H);
  for (int t = steps - 1; t >= 0; --t) {
    const VectorXd h_prev = t > 0 ? VectorXd(tr.states.col(t - 1)) : VectorXd::Zero(H);
    const VectorXd dh = d_states.col(t) + d_next;
    const auto z = tr.update.col(t);
    const auto r = tr.reset.col(t);
    const auto n = tr.cand.col(t);
    const auto x = tr.embedded.col(t);

    const VectorXd dn = dh.cwiseProduct(VectorXd::Ones(H) - z);
    const VectorXd dz = dh.cwiseProduct(h_prev - n);
    VectorXd dh_prev = dh.cwiseProduct(z);

    const VectorXd da_n = dn.cwiseProduct((1.0 - n.array().square()).matrix());
    const VectorXd rh = r.cwiseProduct(h_prev);
    g->w_cand.noalias() += da_n * x.transpose();
    g->u_cand.noalias() += da_n * rh.transpose();
    g->b_cand.col(0) += da_n;
    const VectorXd d_rh = p.u_cand.transpose() * da_n;
    const VectorXd dr = d_rh.cwiseProduct(h_prev);
    dh_prev += d_rh.cwiseProduct(r);

    const VectorXd da_z = dz.cwiseProduct((z.array() * (1.0 - z.array())).matrix());
    g->w_update.noalias() += da_z * x.transpose();
    g->u_update.noalias() += da_z * h_prev.transpose();
    g->b_update.col(0) += da_z;
    dh_prev.noalias() += p.u_update.transpose() * da_z;

    const VectorXd da_r = dr.cwiseProduct((r.array() * (1.0 - r.array())).matrix());
    g->w_reset.noalias() += da_r * x.transpose();
    g->u_reset.noalias() += da_r * h_prev.transpose();
    g->b_reset.col(0) += da_r;
    dh_prev.noalias() += p.u_reset.transpose() * da_r;

    const VectorXd dx = p.w_cand.transpose() * da_n + p.w_update.transpose() * da_z +
                        p.w_reset.transpose() * da_r;
    g->embedding.row(inputs[static_cast<std::size_t>(t)]) += dx.transpose();
    d_next = dh_prev;
  }
  return loss;
}

double sequence_loss(const ModelParams& params, const TrainingExample& example) {
  return loss_and_gradients(params, example, nullptr);
}

}  // namespace restfuzz
