#ifndef EXNER_TOY_TRANSFORMER_H_
#define EXNER_TOY_TRANSFORMER_H_

#include <string>
#include <vector>

#include "exner/encoder.h"

namespace exner {

// Parameters of one pre-norm transformer block. Bias and gain tensors are
// 1 x d (or 1 x ffn) row matrices so every tensor has the same type.
struct BlockParams {
  Matrix ln1_gain, ln1_bias;
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln2_gain, ln2_bias;
  Matrix w1, b1, w2, b2;
};

struct ToyParams {
  Matrix embed;  // vocab_hash_buckets x d
  std::vector<BlockParams> blocks;
  Matrix final_gain, final_bias;

  // Calls f(name, tensor) for every tensor in a fixed order.
  template <typename Self, typename F>
  static void visit(Self& p, F&& f) {
    f("embed", p.embed);
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
      auto& b = p.blocks[l];
      const std::string pre = "block" + std::to_string(l) + ".";
      f(pre + "ln1_gain", b.ln1_gain);
      f(pre + "ln1_bias", b.ln1_bias);
      f(pre + "wq", b.wq);
      f(pre + "bq", b.bq);
      f(pre + "wk", b.wk);
      f(pre + "bk", b.bk);
      f(pre + "wv", b.wv);
      f(pre + "bv", b.bv);
      f(pre + "wo", b.wo);
      f(pre + "bo", b.bo);
      f(pre + "ln2_gain", b.ln2_gain);
      f(pre + "ln2_bias", b.ln2_bias);
      f(pre + "w1", b.w1);
      f(pre + "b1", b.b1);
      f(pre + "w2", b.w2);
      f(pre + "b2", b.b2);
    }
    f("final_gain", p.final_gain);
    f("final_bias", p.final_bias);
  }

  template <typename F>
  void for_each(F&& f) { visit(*this, std::forward<F>(f)); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, std::forward<F>(f)); }

  // Same shapes, all zeros.
  ToyParams zeros_like() const;
  void set_zero();
  // this += scale * other
  void add_scaled(const ToyParams& other, double scale);
  std::size_t num_values() const;
};

// Small bidirectional transformer: hashed token embeddings plus sinusoidal
// positions, pre-norm blocks (multi-head self-attention, GELU feed-forward)
// and a final layer norm. Differentiable end to end via backward().
class ToyTransformer : public Encoder {
 public:
  // Random initialization from config.seed.
  explicit ToyTransformer(EncoderConfig config);
  ToyTransformer(EncoderConfig config, ToyParams params);

  const EncoderConfig& config() const override { return config_; }
  ToyParams& params() { return params_; }
  const ToyParams& params() const { return params_; }

  // Intermediate values of one forward pass, consumed by backward().
  struct Tape;

  // Forward pass over already-fitted tokens (sentinel not included) that
  // records what backward() needs. Returns the (n + 1) x d output rows.
  Matrix forward(std::span<const std::string> tokens, Tape& tape) const;

  // Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output rows).
  void backward(const Tape& tape, const Matrix& d_rows, ToyParams& grads) const;

  int ffn_dim() const { return 4 * config_.dim; }

 protected:
  Matrix encode_rows(std::span<const std::string> tokens) const override;

 private:
  EncoderConfig config_;
  ToyParams params_;
};

struct ToyTransformer::Tape {
  struct Norm {
    Matrix normalized;  // x-hat
    Vector inv_std;
  };
  struct Block {
    Norm ln1;
    Matrix attn_in, q, k, v;
    std::vector<Matrix> probs;  // per head, n x n
    Matrix heads_out;
    Norm ln2;
    Matrix ffn_in, hidden_pre, hidden;
  };
  std::vector<int> buckets;
  std::vector<Block> blocks;
  Norm final_norm;
};

}  // namespace exner

#endif  // EXNER_TOY_TRANSFORMER_H_
