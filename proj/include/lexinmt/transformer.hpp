#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lexinmt/nnet.hpp"
#include "lexinmt/tape.hpp"

namespace lexinmt::nnet {

struct DropoutCtx {
  double p = 0.0;
  uint64_t seed = 0;
  int64_t step = 0;
};

using ShapeList = std::vector<std::pair<std::string, std::pair<int, int>>>;

// Pre-LN transformer stacks. Parameter names live under a prefix, e.g.
// "ctx.enc.l0.attn.wq"; the embedding table is a separate named tensor so it
// can be shared between encoder, decoder and the output projection.
void init_embedding(ParamStore& store, const std::string& name,
                    const ModelConfig& cfg, DetRng& rng);
void init_encoder_stack(ParamStore& store, const ModelConfig& cfg,
                        const std::string& prefix, DetRng& rng);
void init_decoder_stack(ParamStore& store, const ModelConfig& cfg,
                        const std::string& prefix, DetRng& rng);

ShapeList embedding_shape(const std::string& name, const ModelConfig& cfg);
ShapeList encoder_shapes(const ModelConfig& cfg, const std::string& prefix);
ShapeList decoder_shapes(const ModelConfig& cfg, const std::string& prefix);

// Token embedding lookup (scaled by sqrt(d)) plus sinusoidal encodings for
// caller-supplied position ids.
Var embed_sequence(Tape& tape, ParamStore& store, const std::string& embed_name,
                   const ModelConfig& cfg, const std::vector<int>& ids,
                   const std::vector<int>& positions);

// attn_mask, when given, is an additive len x len matrix (0 or -1e30).
Var encoder_stack(Tape& tape, ParamStore& store, const ModelConfig& cfg,
                  const std::string& prefix, Var x, const Matrix* attn_mask,
                  const DropoutCtx& dropout);

// Causal self-attention decoder with cross-attention over enc_out.
Var decoder_stack(Tape& tape, ParamStore& store, const ModelConfig& cfg,
                  const std::string& prefix, Var x, Var enc_out,
                  const DropoutCtx& dropout);

// Convenience: embed + encoder stack.
Var encode(Tape& tape, ParamStore& store, const ModelConfig& cfg,
           const std::string& embed_name, const std::string& prefix,
           const std::vector<int>& ids, const std::vector<int>& positions,
           const Matrix* attn_mask, const DropoutCtx& dropout);

// Gradient-free full-sequence encoder for inference.
Matrix encode_eval(const ParamStore& store, const ModelConfig& cfg,
                   const std::string& embed_name, const std::string& prefix,
                   const std::vector<int>& ids, const std::vector<int>& positions,
                   const Matrix* attn_mask = nullptr);

// Step-wise decoder with self-attention KV caches; copyable so beam search
// hypotheses can fork. Cross-attention keys/values are computed once from the
// encoder output and shared between forks.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const ParamStore& store, const ModelConfig& cfg,
                     std::string embed_name, std::string prefix,
                     const Matrix& enc_out);

  // Feeds one token and returns the final hidden state for this step.
  std::vector<double> step(int token_id);
  int length() const { return t_; }

 private:
  struct LayerCross {
    Matrix k, v;  // S x d
  };
  const ParamStore* store_;
  const ModelConfig* cfg_;
  std::string embed_;
  std::string prefix_;
  std::shared_ptr<const std::vector<LayerCross>> cross_;
  std::vector<Matrix> self_k_, self_v_;  // per layer, t x d
  int t_ = 0;
};

}  // namespace lexinmt::nnet
