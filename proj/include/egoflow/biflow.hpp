#pragma once

// The dual-stream network: a shared context encoder, the ego anchor that
// produces FiLM parameters, and two decoders of identical shape. Only the
// future decoder is modulated.
//
// Decoder tokens are candidates: row k*A + a of a (K*A) x D hidden state,
// matching the CandidateSet layout.

#include "egoflow/config.hpp"
#include "egoflow/flow.hpp"
#include "egoflow/params.hpp"
#include "egoflow/traj.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace egoflow {

struct Ablations {
  bool social = true;          // SI: social attention before the positional table
  bool anchor = true;          // EA: FiLM modulation of the future decoder
  bool shared_encoder = true;  // SE: history decoder reads the same encoder

  bool operator==(const Ablations&) const = default;
};

struct ModelConfig {
  int latent_dim = 128;
  int heads = 4;
  int ffn_mult = 2;
  int modes = 20;  // K mode embeddings; decode accepts any K <= modes
  int kk_layers = 1;
  int decoder_layers = 4;
  int history_steps = 8;
  int future_steps = 12;
  int max_agents = 32;
  bool agent_pe = true;
  Ablations ablations;
  uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct EncoderOutput {
  Matrix h_enc;  // A x D
};

struct AnchorPair {
  Matrix agent;  // A x D
  Matrix scene;  // 1 x D
};

struct FilmParams {
  Matrix beta;   // A x D
  Matrix gamma;  // A x D

  static FilmParams zeros(int A, int D);
};

// (1 + gamma) * z + beta with rows of z being candidates k*A + a.
Matrix film_modulate(const Matrix& z, const FilmParams& film);

struct LossWeights {
  double recon = 1.0;
  double pred = 1.0;
  bool per_agent = true;
  RegressionMode mode = RegressionMode::wta;
};

// One training example in model space.
struct TrainExample {
  ObservedHistory history;  // normalized, invisible steps filled
  Matrix past;              // A x 2T_p, normalized clean history (absolute)
  Matrix future;            // A x 2T_f, displacements from the last noisy-history point
};

// Noise and times of one stochastic loss evaluation.
struct FlowDraw {
  double t_history = 0.5;
  double t_future = 0.5;
  Matrix noise_history;  // (K*A) x 2T_p
  Matrix noise_future;   // (K*A) x 2T_f

  static FlowDraw sample(int K, int A, int Tp, int Tf, const TimeSampler& times, Rng& rng);
};

struct LossValue {
  double total = 0.0;
  double recon = 0.0;
  double pred = 0.0;
  WtaResult future;
  WtaResult history;
};

class BiFlowModel {
 public:
  explicit BiFlowModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Differentiable pieces. `history_stream` selects the history encoder when
  // the shared encoder is ablated.
  ad::Var encode(Binder& bind, const ObservedHistory& history, bool history_stream = false) const;
  ad::Var agent_anchor(Binder& bind, ad::Var h_enc) const;
  ad::Var scene_anchor(Binder& bind, ad::Var agent_anchor) const;
  // Returns A x 2D: [beta | gamma].
  ad::Var film(Binder& bind, ad::Var agent_anchor, ad::Var scene_anchor) const;
  // Returns trajectories ((K*A) x 2T) and logits ((K*A) x 1). `film` is A x 2D.
  std::pair<ad::Var, ad::Var> decode(Binder& bind, Stream stream, ad::Var h_enc, const Matrix& state, double t,
                                     ad::Var film, int K) const;

  LossValue loss(Binder& bind, const TrainExample& example, const FlowDraw& draw, const LossWeights& weights,
                 ad::Var* total = nullptr) const;

  // Value-level API.
  EncoderOutput encode(const ObservedHistory& history) const;
  AnchorPair ego_anchor(const EncoderOutput& enc) const;
  // Scene anchor of an arbitrary agent-anchor matrix.
  Matrix scene_anchor(const Matrix& agent_anchor) const;
  FilmParams film_params(const AnchorPair& anchors) const;
  // `anchors` must be present on the future stream and is ignored on the history stream.
  CandidateSet decode(Stream stream, const EncoderOutput& enc, const Matrix& state, double t,
                      const AnchorPair* anchors, int K) const;

  // Future candidates in displacement space from standard-normal noise.
  CandidateSet sample_future(const ObservedHistory& history, int K, std::span<const double> grid, Rng& rng) const;

 private:
  struct LinearIx {
    int w = -1, b = -1;
  };
  struct NormIx {
    int g = -1, b = -1;
  };
  struct MlpIx {
    LinearIx l1, l2;
  };
  struct BlockIx {
    NormIx ln1, ln2;
    LinearIx q, k, v, o, ff1, ff2;
  };
  struct EncoderIx {
    MlpIx input;
    BlockIx social, context;
    int pe = -1;
  };
  struct DecoderIx {
    LinearIx state, fuse;
    MlpIx time;
    int modes = -1;
    std::vector<BlockIx> kk, layers;
    NormIx out;
    MlpIx head;
    LinearIx logit;
  };

  LinearIx make_linear(const std::string& name, int in, int out, double gain, Rng& rng);
  NormIx make_norm(const std::string& name, int dim);
  MlpIx make_mlp(const std::string& name, int in, int hidden, int out, double out_gain, Rng& rng);
  BlockIx make_block(const std::string& name, Rng& rng);
  EncoderIx make_encoder(const std::string& prefix, Rng& rng);
  DecoderIx make_decoder(const std::string& prefix, int T, Rng& rng);

  ad::Var apply(Binder& bind, const LinearIx& l, ad::Var x) const;
  ad::Var apply(Binder& bind, const NormIx& n, ad::Var x) const;
  ad::Var apply(Binder& bind, const MlpIx& m, ad::Var x) const;
  ad::Var apply(Binder& bind, const BlockIx& b, ad::Var x,
                const std::shared_ptr<const ad::AttentionGroups>& groups) const;

  ModelConfig config_;
  ParamSet params_;
  EncoderIx encoder_;
  std::optional<EncoderIx> history_encoder_;
  NormIx anchor_agent_norm_, anchor_scene_norm_;
  MlpIx anchor_agent_, anchor_scene_, anchor_film_;
  DecoderIx future_, history_;
};

// Sinusoidal features of t in [0, 1], width dim.
Matrix time_features(double t, int dim);

// Differentiable FiLM over candidate rows; film is A x 2D.
ad::Var film_apply(ad::Var z, ad::Var film, int A);

// Checkpoint: magic, version, JSON header, raw parameter values.
struct CheckpointMeta {
  std::string fingerprint;  // of the model config
  nlohmann::json data;      // dataset description (T_p, T_f, scale, shard fingerprint)
  nlohmann::json extra;
};

void save_checkpoint(const std::filesystem::path& path, const BiFlowModel& model, const CheckpointMeta& meta);
// Throws ConfigError if `expected_fingerprint` is given and differs.
BiFlowModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr,
                            const std::string* expected_fingerprint = nullptr);

}  // namespace egoflow
