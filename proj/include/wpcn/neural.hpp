#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "wpcn/dataset.hpp"
#include "wpcn/tensor.hpp"

namespace wpcn {

// ---------------------------------------------------------------------------
// Architecture description
// ---------------------------------------------------------------------------

struct ConvSpec {
    int out_ch = 0;
    int kh = 0, kw = 0;  // unit stride, zero 'same' padding
};

// Four parallel flows concatenated on the channel axis: 1x1; 1x1 then
// k1 x k2; 1x1 then k3 x k4; 3x3 max-pool then 1x1. out_ch splits evenly
// across flows (must be divisible by 4).
struct InceptionSpec {
    int out_ch = 0;
    int k1h = 0, k1w = 0;
    int k2h = 0, k2w = 0;
};

struct DenseSpec {
    int out = 0;
};

struct BatchNormSpec {};
struct ReluSpec {};

// Concatenates the previous layer's output with the output of layer
// `from` (same spatial shape) on the channel axis.
struct SkipConcatSpec {
    int from = 0;
};

// Averages over all channels and an adaptive spatial window, producing a
// single-channel out_h x out_w map.
struct AdaptiveAvgPoolSpec {
    int out_h = 0, out_w = 0;
};

using LayerSpec = std::variant<ConvSpec, InceptionSpec, DenseSpec, BatchNormSpec,
                               ReluSpec, SkipConcatSpec, AdaptiveAvgPoolSpec>;

struct ArchSpec {
    std::string name;
    int in_ch = 1, in_h = 0, in_w = 0;
    std::vector<LayerSpec> layers;
    int class_rows = 0;  // K+1 (or the flat class count for single-softmax nets)
    int class_cols = 0;  // N (or 1)
    bool flat_classes = false;  // single softmax over class_rows*class_cols
    int flat_n = 0, flat_k = 0;  // decode dimensions for flat-class models
};

struct Shape {
    int c = 0, h = 0, w = 0;
    std::size_t count() const { return static_cast<std::size_t>(c) * h * w; }
};

// Output shape of every layer; throws on an inconsistent chain.
std::vector<Shape> infer_shapes(const ArchSpec& arch);

// Exact number of trainable scalars (conv/dense weights and biases,
// batchnorm scale and shift; running stats excluded).
std::int64_t param_count(const ArchSpec& arch);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> v;
};

struct Model {
    ArchSpec arch;
    std::vector<ParamTensor> params;   // trainable, canonical layer order
    std::vector<ParamTensor> buffers;  // batchnorm running mean/var
    std::uint64_t init_seed = 0;
    // Feature standardization the model was trained with; applied by
    // predict so callers pass raw encoded inputs.
    std::vector<double> norm_mu, norm_sigma;
    int norm_value_count = 0;
};

// Fan-in-scaled uniform init, seeded and draw-order stable.
Model init_model(const ArchSpec& arch, std::uint64_t seed);

struct Gradients {
    std::vector<std::vector<double>> g;  // aligned with Model::params
};

// Activation caches for one forward pass, consumed by backward.
struct ForwardCache;

// Batch forward. Train mode uses batch statistics and updates the
// model's running stats; infer mode is a pure function of weights,
// running stats and input. Returns logits (n, 1, class_rows, class_cols).
Tensor forward(Model& model, const Tensor& input, bool train,
               ForwardCache* cache = nullptr);
Tensor forward_infer(const Model& model, const Tensor& input);

// Backpropagates d(loss)/d(logits); fills parameter gradients.
void backward(const Model& model, const ForwardCache& cache,
              const Tensor& grad_logits, Gradients& grads);

ForwardCache* new_cache();
void free_cache(ForwardCache*);

// ---------------------------------------------------------------------------
// Losses (per-column softmax over class_rows entries)
// ---------------------------------------------------------------------------

// Mean negative log-likelihood; labels give the class row per column.
double ce_loss(const Tensor& logits, const std::vector<Assignment>& labels,
               Tensor* grad = nullptr);

// KL divergence from the temperature-softened teacher distribution to the
// student's, averaged like ce_loss. Gradient is w.r.t. student logits.
double kld_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                double temperature, Tensor* grad = nullptr);

// lambda1 * ce + lambda2 * kld.
double distill_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                    const std::vector<Assignment>& labels, double lambda1,
                    double lambda2, double temperature, Tensor* grad = nullptr);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::int64_t t = 0;
};

AdamState init_adam(const Model& model);
void adam_step(Model& model, const Gradients& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 128;
    int epochs = 30;
    std::uint64_t seed = 1;
    double lambda1 = 1.0;      // truth-label CE weight
    double lambda2 = 0.0;      // teacher KLD weight (0 = plain training)
    double temperature = 1.0;
};

struct TrainData {
    const std::vector<DatasetSample>* train = nullptr;
    const std::vector<DatasetSample>* val = nullptr;
    const DatasetMeta* meta = nullptr;
};

struct TrainResult {
    Model model;
    std::vector<double> train_loss;  // optimized objective per epoch
    std::vector<double> val_loss;    // CE per epoch (infer mode)
};

// Minibatch Adam training; deterministic per seed. teacher_logits, when
// given, must align with the train split order. Throws on non-finite loss.
TrainResult train(const ArchSpec& arch, const TrainData& data, const TrainConfig& cfg,
                  const std::vector<Tensor>* teacher_train_logits = nullptr);

// Per-column argmax (ties take the smallest class); flat-class models
// decode the class index into base-(K+1) digits.
Assignment predict(const Model& model, const InputMatrix& raw_input);
Tensor model_logits(const Model& model, const std::vector<InputMatrix>& raw_inputs);

// CE of a model over a sample set (infer mode).
double evaluate_ce(const Model& model, const std::vector<DatasetSample>& samples,
                   const DatasetMeta& meta);

// ---------------------------------------------------------------------------
// Architectures
// ---------------------------------------------------------------------------

// Generic conv stack: 4x4 stem conv, mid convs with the given kernel, 1x1
// head conv, stem-to-head skip concatenation, adaptive pooling to
// (K+1) x N. nodes = {stem, mid..., head}.
ArchSpec make_conv_stack(int n, int k, const std::vector<int>& nodes,
                         std::pair<int, int> mid_kernel, const std::string& name);

ArchSpec make_sc_net(int n, int k);
ArchSpec make_skin_net(int n, int k);
ArchSpec make_rel_net(int n, int k);
ArchSpec make_student(int n, int k, const std::vector<int>& nodes = {8, 8, 8, 10});

// Base-(K+1) digits of a flat class index, least-significant digit first.
Assignment decode_flat_class(int cls, int n, int k);
int encode_flat_class(const Assignment& a, int k);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

// Raw input (rows x 4) to a (1, 1, rows, 4) tensor after normalization.
Tensor to_input_tensor(const InputMatrix& raw, const DatasetMeta& meta);

}  // namespace wpcn
