#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onion/arch.hpp"
#include "onion/calibration.hpp"
#include "onion/nn.hpp"
#include "onion/sparse_batch.hpp"
#include "onion/tensor.hpp"

namespace onion {

// Prediction assigned to examples rejected by S1. Never a valid S2 class.
inline constexpr int kRejectLabel = -1;

enum class S2Loss { CrossEntropy, BinaryHinge };

struct JointLossConfig {
  double alpha = 0.5;  // L = alpha * L_S1 + (1 - alpha) * L_S2, alpha in (0, 1)
  S2Loss s2_loss = S2Loss::CrossEntropy;
};

struct ConvWeights {
  Tensor filters;  // out x in x s x s
  Tensor bias;     // out
  Tensor filters_velocity;
  Tensor bias_velocity;
};

struct StageWeights {
  ConvStage stage;
  std::optional<ConvWeights> s1;
  std::optional<ConvWeights> s2;
};

// Weights of both stages and the S2 <- S1 cross-links. The S2 filters of a
// stage take s2_in_shared + s2_in_own input channels, with the channels read
// from S1 first. No S1 filter ever reads S2 maps.
class CascadeModel {
 public:
  CascadeModel() = default;
  CascadeModel(ArchSpec spec, std::vector<StageWeights> stages);

  const ArchSpec& spec() const noexcept { return spec_; }
  std::vector<StageWeights>& stages() noexcept { return stages_; }
  const std::vector<StageWeights>& stages() const noexcept { return stages_; }

  bool has_s1() const noexcept { return spec_.variant != Variant::Monolithic; }
  std::size_t parameter_count() const;

  // Weight tensors in declaration order: per stage S1 filters, S1 bias, S2
  // filters, S2 bias (absent halves skipped).
  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor*> parameters();

 private:
  ArchSpec spec_;
  std::vector<StageWeights> stages_;
};

// Fan-in scaled Gaussian initialisation (std = sqrt(2 / fan_in)), zero bias.
// Specs with residual blocks are cost-model only and are rejected here.
CascadeModel build(const ArchSpec& spec, std::uint64_t seed);

struct S1Output {
  Tensor scores;               // N x K1 x 1 x 1 raw S1 outputs (empty for monolithic)
  std::vector<Tensor> shared;  // per stage: the S1 maps that stage's S2 conv reads (empty if none)
};

S1Output forward_s1(const CascadeModel& model, const Tensor& batch);

struct S2Output {
  Tensor scores;                  // survivors x K2 x 1 x 1
  std::vector<std::size_t> rows;  // original batch row of each scores row
};

enum class S2Layout {
  Compact,   // reshuffle survivors into one contiguous block (default)
  RowByRow,  // evaluate each surviving example on its own
};

// Runs S2 on the rows selected by `mask`. With S2Layout::Compact the shared
// maps in `s1` are reshuffled in place.
S2Output forward_s2_shared(const CascadeModel& model, const Tensor& batch, S1Output& s1, const PassMask& mask,
                           S2Layout layout = S2Layout::Compact);

// S2 on every row of `shared` (already compacted), no masking.
Tensor forward_s2_dense(const CascadeModel& model, const std::vector<Tensor>& shared);

// Raw convolution outputs (before any ReLU or pooling) of every stage, with
// S2 run on the whole batch. Absent halves are empty tensors.
struct FeatureMaps {
  std::vector<Tensor> s1;
  std::vector<Tensor> s2;
};
FeatureMaps feature_maps(const CascadeModel& model, const Tensor& batch);

// S1 class probabilities from raw S1 outputs.
Tensor s1_probabilities(const S1Output& s1);

// Class decision of S2 scores: argmax, or sign for a single hinge output.
std::vector<int> s2_decisions(const Tensor& s2_scores);

struct LossBreakdown {
  double total = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
};

struct ModelGrads {
  std::vector<std::optional<ConvWeights>> s1;  // only filters/bias are filled
  std::vector<std::optional<ConvWeights>> s2;
};

// Loss and gradients of alpha * L_S1 + (1 - alpha) * L_S2 for every weight.
// alpha may be anywhere in [0, 1] here; monolithic models use L_S2 alone.
// s2_labels are class ids; for a single-output hinge head 0 / 1 map to -1 / +1.
std::pair<LossBreakdown, ModelGrads> compute_gradients(const CascadeModel& model, const Tensor& batch,
                                                       std::span<const int> s1_labels,
                                                       std::span<const int> s2_labels, double alpha,
                                                       S2Loss s2_loss);

LossBreakdown evaluate_loss(const CascadeModel& model, const Tensor& batch, std::span<const int> s1_labels,
                            std::span<const int> s2_labels, double alpha, S2Loss s2_loss);

void apply_gradients(CascadeModel& model, const ModelGrads& grads, const SgdConfig& sgd);

// One SGD step on the combined loss. Throws std::invalid_argument unless
// 0 < alpha < 1.
LossBreakdown train_step(CascadeModel& model, const Tensor& batch, std::span<const int> s1_labels,
                         std::span<const int> s2_labels, const JointLossConfig& loss, const SgdConfig& sgd);

struct CascadeStats {
  double pass_fraction = 0.0;
  double s1_seconds = 0.0;
  double s2_seconds = 0.0;  // includes compaction
  std::uint64_t macs = 0;
};

struct InferenceResult {
  std::vector<int> predictions;  // kRejectLabel for rejected rows
  PassMask mask;
  CascadeStats stats;
};

InferenceResult infer_cascade(const CascadeModel& model, const Tensor& batch, const ThresholdSet& thresholds,
                              S2Layout layout = S2Layout::Compact);

// Cascade run with an externally imposed pass mask.
InferenceResult infer_with_mask(const CascadeModel& model, const Tensor& batch, const PassMask& mask,
                                S2Layout layout = S2Layout::Compact);

// Mean input activation of the final S2 layer per S2 class, over the examples
// the model classifies correctly (all examples of a class if none are).
std::vector<std::vector<double>> class_mean_activations(const CascadeModel& model, const Tensor& images,
                                                        std::span<const int> s2_labels);

// Checkpoint: text header with format version and canonical arch text, then
// raw little-endian float32 weights in declaration order.
void save_checkpoint(const CascadeModel& model, std::ostream& os);
CascadeModel load_checkpoint(std::istream& is);
void save_checkpoint(const CascadeModel& model, const std::string& path);
CascadeModel load_checkpoint(const std::string& path);

}  // namespace onion
