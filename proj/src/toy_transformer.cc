#include "exner/toy_transformer.h"

#include <cmath>
#include <random>

#include "exner/errors.h"

namespace exner {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias,
                  ToyTransformer::Tape::Norm& tape) {
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  tape.normalized.resize(n, x.cols());
  tape.inv_std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / d;
    const auto centered = x.row(i).array() - mean;
    const double var = centered.square().sum() / d;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    tape.normalized.row(i) = centered * inv;
    tape.inv_std[i] = inv;
  }
  Matrix y = tape.normalized.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain,
                           const ToyTransformer::Tape::Norm& tape,
                           Matrix& d_gain, Matrix& d_bias) {
  const Matrix& xhat = tape.normalized;
  d_gain.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  d_bias.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  const double d = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_dxhat = dxhat.row(i).sum() / d;
    const double mean_dxhat_xhat = dxhat.row(i).dot(xhat.row(i)) / d;
    dx.row(i) = tape.inv_std[i] *
                (dxhat.row(i).array() - mean_dxhat -
                 xhat.row(i).array() * mean_dxhat_xhat)
                    .matrix();
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

}  // namespace

ToyParams ToyParams::zeros_like() const {
  ToyParams z = *this;
  z.set_zero();
  return z;
}

void ToyParams::set_zero() {
  for_each([](const std::string&, Matrix& m) { m.setZero(); });
}

void ToyParams::add_scaled(const ToyParams& other, double scale) {
  std::vector<const Matrix*> theirs;
  other.for_each([&](const std::string&, const Matrix& m) { theirs.push_back(&m); });
  std::size_t k = 0;
  for_each([&](const std::string&, Matrix& m) { m += scale * *theirs[k++]; });
}

std::size_t ToyParams::num_values() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) {
    n += static_cast<std::size_t>(m.size());
  });
  return n;
}

ToyTransformer::ToyTransformer(EncoderConfig config) : config_(std::move(config)) {
  config_.kind = EncoderKind::kToyTransformer;
  config_.validate();
  const int d = config_.dim;
  const int f = ffn_dim();
  std::mt19937_64 rng(config_.seed);
  const double proj = 1.0 / std::sqrt(static_cast<double>(d));
  params_.embed = normal_matrix(config_.vocab_hash_buckets, d, 1.0, rng);
  for (int l = 0; l < config_.layers; ++l) {
    BlockParams b;
    b.ln1_gain = Matrix::Ones(1, d);
    b.ln1_bias = Matrix::Zero(1, d);
    b.wq = normal_matrix(d, d, proj, rng);
    b.bq = Matrix::Zero(1, d);
    b.wk = normal_matrix(d, d, proj, rng);
    b.bk = Matrix::Zero(1, d);
    b.wv = normal_matrix(d, d, proj, rng);
    b.bv = Matrix::Zero(1, d);
    b.wo = normal_matrix(d, d, 0.5 * proj, rng);
    b.bo = Matrix::Zero(1, d);
    b.ln2_gain = Matrix::Ones(1, d);
    b.ln2_bias = Matrix::Zero(1, d);
    b.w1 = normal_matrix(d, f, proj, rng);
    b.b1 = Matrix::Zero(1, f);
    b.w2 = normal_matrix(f, d, 0.5 / std::sqrt(static_cast<double>(f)), rng);
    b.b2 = Matrix::Zero(1, d);
    params_.blocks.push_back(std::move(b));
  }
  // Output rows are compared by dot product; start with norms near d^(1/4).
  params_.final_gain = Matrix::Constant(1, d, std::pow(static_cast<double>(d), -0.25));
  params_.final_bias = Matrix::Zero(1, d);
}

ToyTransformer::ToyTransformer(EncoderConfig config, ToyParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.kind = EncoderKind::kToyTransformer;
  config_.validate();
  if (params_.embed.rows() != config_.vocab_hash_buckets ||
      params_.embed.cols() != config_.dim ||
      static_cast<int>(params_.blocks.size()) != config_.layers) {
    throw InputError("toy transformer parameters do not match config");
  }
}

Matrix ToyTransformer::forward(std::span<const std::string> tokens,
                               Tape& tape) const {
  const int d = config_.dim;
  const int heads = config_.heads;
  const int dh = d / heads;
  const Eigen::Index n = static_cast<Eigen::Index>(tokens.size()) + 1;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  tape.buckets.resize(static_cast<std::size_t>(n));
  tape.buckets[0] = static_cast<int>(stable_hash(kSentinelToken) %
                                     static_cast<std::uint64_t>(config_.vocab_hash_buckets));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    tape.buckets[i + 1] = static_cast<int>(
        stable_hash(tokens[i]) % static_cast<std::uint64_t>(config_.vocab_hash_buckets));
  }

  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = params_.embed.row(tape.buckets[static_cast<std::size_t>(i)]);
    for (int k = 0; k < d; k += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(k) / d);
      x(i, k) += std::sin(static_cast<double>(i) * freq);
      if (k + 1 < d) x(i, k + 1) += std::cos(static_cast<double>(i) * freq);
    }
  }

  tape.blocks.resize(params_.blocks.size());
  for (std::size_t l = 0; l < params_.blocks.size(); ++l) {
    const BlockParams& p = params_.blocks[l];
    Tape::Block& t = tape.blocks[l];
    t.attn_in = layer_norm(x, p.ln1_gain, p.ln1_bias, t.ln1);
    t.q = affine(t.attn_in, p.wq, p.bq);
    t.k = affine(t.attn_in, p.wk, p.bk);
    t.v = affine(t.attn_in, p.wv, p.bv);
    t.probs.resize(static_cast<std::size_t>(heads));
    t.heads_out.resize(n, d);
    for (int h = 0; h < heads; ++h) {
      Matrix s = scale * t.q.middleCols(h * dh, dh) * t.k.middleCols(h * dh, dh).transpose();
      softmax_rows(s);
      t.heads_out.middleCols(h * dh, dh) = s * t.v.middleCols(h * dh, dh);
      t.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    x += affine(t.heads_out, p.wo, p.bo);
    t.ffn_in = layer_norm(x, p.ln2_gain, p.ln2_bias, t.ln2);
    t.hidden_pre = affine(t.ffn_in, p.w1, p.b1);
    t.hidden = t.hidden_pre.unaryExpr([](double v) { return gelu(v); });
    x += affine(t.hidden, p.w2, p.b2);
  }
  return layer_norm(x, params_.final_gain, params_.final_bias, tape.final_norm);
}

void ToyTransformer::backward(const Tape& tape, const Matrix& d_rows,
                              ToyParams& grads) const {
  const int d = config_.dim;
  const int heads = config_.heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dx = layer_norm_backward(d_rows, params_.final_gain, tape.final_norm,
                                  grads.final_gain, grads.final_bias);

  for (std::size_t li = params_.blocks.size(); li-- > 0;) {
    const BlockParams& p = params_.blocks[li];
    BlockParams& g = grads.blocks[li];
    const Tape::Block& t = tape.blocks[li];

    // Feed-forward residual branch.
    g.w2 += t.hidden.transpose() * dx;
    g.b2.row(0) += dx.colwise().sum();
    Matrix d_hidden = dx * p.w2.transpose();
    d_hidden.array() *= t.hidden_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    g.w1 += t.ffn_in.transpose() * d_hidden;
    g.b1.row(0) += d_hidden.colwise().sum();
    const Matrix d_ffn_in = d_hidden * p.w1.transpose();
    dx += layer_norm_backward(d_ffn_in, p.ln2_gain, t.ln2, g.ln2_gain, g.ln2_bias);

    // Attention residual branch.
    g.wo += t.heads_out.transpose() * dx;
    g.bo.row(0) += dx.colwise().sum();
    const Matrix d_heads = dx * p.wo.transpose();
    Matrix dq(t.q.rows(), d), dk(t.k.rows(), d), dv(t.v.rows(), d);
    for (int h = 0; h < heads; ++h) {
      const Matrix& prob = t.probs[static_cast<std::size_t>(h)];
      const auto d_out = d_heads.middleCols(h * dh, dh);
      const Matrix d_prob = d_out * t.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = prob.transpose() * d_out;
      const Eigen::VectorXd row_dot = (prob.array() * d_prob.array()).rowwise().sum();
      Matrix d_score = prob.array() * (d_prob.colwise() - row_dot).array();
      d_score *= scale;
      dq.middleCols(h * dh, dh) = d_score * t.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = d_score.transpose() * t.q.middleCols(h * dh, dh);
    }
    g.wq += t.attn_in.transpose() * dq;
    g.bq.row(0) += dq.colwise().sum();
    g.wk += t.attn_in.transpose() * dk;
    g.bk.row(0) += dk.colwise().sum();
    g.wv += t.attn_in.transpose() * dv;
    g.bv.row(0) += dv.colwise().sum();
    const Matrix d_attn_in = dq * p.wq.transpose() + dk * p.wk.transpose() +
                             dv * p.wv.transpose();
    dx += layer_norm_backward(d_attn_in, p.ln1_gain, t.ln1, g.ln1_gain, g.ln1_bias);
  }

  for (std::size_t i = 0; i < tape.buckets.size(); ++i) {
    grads.embed.row(tape.buckets[i]) += dx.row(static_cast<Eigen::Index>(i));
  }
}

Matrix ToyTransformer::encode_rows(std::span<const std::string> tokens) const {
  Tape tape;
  return forward(tokens, tape);
}

}  // namespace exner
