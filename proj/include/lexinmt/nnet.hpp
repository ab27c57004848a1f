#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lexinmt/matrix.hpp"

#include "json.hpp"

namespace lexinmt::nnet {

using ojson = nlohmann::ordered_json;

struct ModelConfig {
  int d_model = 32;
  int n_heads = 4;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int ffn_dim = 64;
  double dropout = 0.0;
  int vocab_size = 0;
  int max_positions = 512;

  void validate() const;
  int head_dim() const { return d_model / n_heads; }
  ojson to_json() const;
  static ModelConfig from_json(const ojson& j);
};

// Named parameter tensors in registration order (iteration order matters for
// deterministic training).
class ParamStore {
 public:
  Matrix& create(const std::string& name, int rows, int cols);
  Matrix& get(const std::string& name);
  const Matrix& get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  size_t total_entries() const;

 private:
  std::map<std::string, Matrix> params_;
  std::vector<std::string> order_;
};

using GradMap = std::map<std::string, Matrix>;

struct AdamConfig {
  double peak_lr = 7e-4;
  int64_t warmup = 4000;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;

  ojson to_json() const;
  static AdamConfig from_json(const ojson& j);
};

struct AdamState {
  int64_t step = 0;
  std::map<std::string, Matrix> m, v;
};

// Inverse-sqrt schedule with linear warmup; equals peak_lr at step == warmup.
double adam_lr(const AdamConfig& cfg, int64_t step);

// Bias-corrected Adam over every parameter present in grads. Validates all
// gradients (shape + finiteness) before touching any state, so a bad step
// leaves params and moments unchanged.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state,
               const AdamConfig& cfg);

// Sinusoidal position encodings; one row per requested position id.
Matrix position_encoding(const std::vector<int>& positions, int d_model,
                         int max_positions);

// Counter-based dropout mask: keep/(1-p) entries decided by
// hash(seed, step, name, index). Deterministic across runs.
Matrix dropout_mask(int rows, int cols, double p, uint64_t seed, int64_t step,
                    const std::string& tensor_name);

// N(0, std) init, in place.
void init_normal(Matrix& m, DetRng& rng, double std_dev);

// Checkpoint container: magic "LXF1", version u32, config JSON record, then
// named tensors as (name, rows, cols, row-major f64 little-endian).
void save_checkpoint(const std::string& path, const ojson& config,
                     const ParamStore& params);

struct Checkpoint {
  ojson config;
  ParamStore params;
};
Checkpoint load_checkpoint(const std::string& path);

// Checks that the store holds exactly the given tensors at the given shapes.
void validate_params(const ParamStore& params,
                     const std::vector<std::pair<std::string, std::pair<int, int>>>& expected);

}  // namespace lexinmt::nnet
