#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gnnstab/graph.hpp"
#include "gnnstab/taps.hpp"

namespace gnnstab::gnn {

// All three are 1-Lipschitz.
enum class Activation { relu, tanh, linear };

const char* to_string(Activation a);
Activation parse_activation(std::string_view name);

double activate(Activation a, double pre);
double activate_derivative(Activation a, double pre);

struct LayerSpec {
    filters::FilterBank bank;
    Activation activation = Activation::relu;
};

// x_l = sigma_l(H_l(S) x_{l-1}) for every layer, followed by a linear readout
// of the last layer's features at `node`.
struct GnnModel {
    std::vector<LayerSpec> layers;
    Vector readout_weights;
    double readout_bias = 0.0;
    Index node = 0;

    void validate() const;
    Index input_features() const;
    Index output_features() const;
    Index last_tap_count() const;

    // Flat parameter layout: every bank's raw taps in layer order, then the
    // readout weights, then the bias.
    Index parameter_count() const;
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> values);
};

struct LayerShape {
    Index out_features;
    Index taps;
    Activation activation;
};

// Taps of a layer with F_in inputs and K taps are uniform in
// [-1/sqrt(F_in K), 1/sqrt(F_in K)]; readout weights uniform in
// [-1/sqrt(F_L), 1/sqrt(F_L)]; bias zero.
GnnModel init_model(Index in_features, std::span<const LayerShape> layers, Index node,
                    std::uint64_t seed);

// Full pre-readout feature map Phi(S, x) (N x F_L).
Signal feature_map(const GnnModel& model, const graph::Gso& shift, const Signal& x);

// Columns e_n, S e_n, ..., S^{K-1} e_n for the node of interest. The last
// layer is only needed at that node, so its output reduces to inner products
// with these rows of S^k.
class NodeProbes {
public:
    NodeProbes(const graph::Gso& shift, Index node, Index tap_count);

    Index node() const noexcept { return node_; }
    const Matrix& columns() const noexcept { return columns_; }

private:
    Index node_;
    Matrix columns_;
};

NodeProbes make_probes(const GnnModel& model, const graph::Gso& shift);

struct ForwardCache {
    // Layers before the last: S^k x_{l-1} for k < K_l, and pre-activations.
    std::vector<std::vector<Signal>> shifted;
    std::vector<Signal> pre_activations;
    // Last layer, at the node of interest only.
    Matrix last_shifted;  // K x F_in, entry (k, f) = (S^k x_{L-1})_{n f}
    Vector last_pre;      // F_L
    Vector last_features; // F_L

    bool empty() const noexcept { return last_pre.size() == 0; }
};

struct ForwardResult {
    double prediction = 0.0;
    ForwardCache cache;
};

ForwardResult forward(const GnnModel& model, const graph::Gso& shift, const Signal& x);
ForwardResult forward(const GnnModel& model, const graph::Gso& shift, const NodeProbes& probes,
                      const Signal& x);

double predict(const GnnModel& model, const graph::Gso& shift, const NodeProbes& probes,
               const Signal& x);

struct Sample {
    Signal x;
    double y = 0.0;
};

class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::vector<Sample> samples);

    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    const Sample& operator[](std::size_t i) const { return samples_[i]; }
    const std::vector<Sample>& samples() const noexcept { return samples_; }
    // Common node count; 0 when empty.
    Index node_count() const noexcept;

private:
    std::vector<Sample> samples_;
};

std::vector<double> predict_all(const GnnModel& model, const graph::Gso& shift,
                                const Dataset& data);

inline constexpr double kSmoothL1Beta = 1.0;

double smooth_l1_loss(double prediction, double target, double beta = kSmoothL1Beta);
// d loss / d prediction; equals the residual clipped to [-1, 1] for beta = 1.
double smooth_l1_derivative(double prediction, double target, double beta = kSmoothL1Beta);

struct TrainConfig {
    double mu = 0.0;
    // Penalty interval; defaults to [lambda_min, lambda_max] of the training GSO.
    std::optional<std::pair<double, double>> lambda_interval;
    Index grid_size = 1001;
    double learning_rate = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon_adam = 1e-8;
    int epochs = 40;
    Index batch_size = 5;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);

// Uniform grid over the configured interval, or the GSO's eigenvalue range.
Vector penalty_grid(const TrainConfig& config, const graph::Gso& shift);

struct PenaltyResult {
    double value = 0.0;
    // Same layout as GnnModel::parameters(); readout entries are zero.
    std::vector<double> gradient;
};

// Sum over every filter of every layer of max_grid |lambda h'(lambda)|. The
// subgradient is taken at the lowest-index argmax of each filter.
PenaltyResult penalty(const GnnModel& model, const Vector& grid);

// Largest per-filter constant max_grid |lambda h'(lambda)| over all layers.
double max_lipschitz_constant(const GnnModel& model, const Vector& grid);

// Gradient of smooth_l1(prediction, y) + mu * penalty with respect to every
// parameter, in GnnModel::parameters() layout.
std::vector<double> backward(const GnnModel& model, const graph::Gso& shift,
                             const NodeProbes& probes, const Sample& sample,
                             const ForwardCache& cache, double mu, const Vector& grid);

std::vector<double> backward(const GnnModel& model, const graph::Gso& shift,
                             const Sample& sample, const ForwardCache& cache,
                             const TrainConfig& config);

struct AdamState {
    explicit AdamState(std::size_t parameter_count)
        : first(parameter_count, 0.0), second(parameter_count, 0.0) {}

    std::vector<double> first;
    std::vector<double> second;
    long step = 0;
};

// Bias-corrected ADAM update of `params` in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> gradient,
               const TrainConfig& config);

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;     // mean smooth-L1 loss over the epoch's samples
    double penalty = 0.0;  // penalty value after the epoch
};

struct TrainResult {
    GnnModel model;
    std::vector<EpochRecord> trace;
    std::pair<double, double> lambda_interval;
};

// Mini-batch ADAM on mean batch loss + mu * penalty. Batches come from a
// seeded reshuffle at every epoch; batch gradients are averaged per sample.
TrainResult train(GnnModel model, const graph::Gso& shift, const Dataset& train_set,
                  const TrainConfig& config);

// CSV "epoch,loss,penalty".
void write_loss_trace(std::ostream& out, std::span<const EpochRecord> trace);

// JSON checkpoint with dimensions, taps, readout and an arbitrary config echo.
void save_checkpoint(std::ostream& out, const GnnModel& model, const nlohmann::json& config);
GnnModel load_checkpoint(std::istream& in, nlohmann::json* config_echo = nullptr);

}  // namespace gnnstab::gnn
