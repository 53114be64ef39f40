#include "gnnstab/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "gnnstab/csv.hpp"
#include "gnnstab/error.hpp"
#include "gnnstab/filters.hpp"
#include "gnnstab/spectral.hpp"

namespace gnnstab::gnn {

const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::linear: return "linear";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "linear") return Activation::linear;
    throw ValidationError("unknown activation '" + std::string(name) + "'");
}

double activate(Activation a, double pre) {
    switch (a) {
        case Activation::relu: return pre > 0.0 ? pre : 0.0;
        case Activation::tanh: return std::tanh(pre);
        case Activation::linear: return pre;
    }
    return pre;
}

double activate_derivative(Activation a, double pre) {
    switch (a) {
        case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Activation::linear: return 1.0;
    }
    return 1.0;
}

namespace {

template <typename M>
Matrix apply_activation(Activation a, const M& pre) {
    return pre.unaryExpr([a](double v) { return activate(a, v); });
}

template <typename M>
Matrix activation_slope(Activation a, const M& pre) {
    return pre.unaryExpr([a](double v) { return activate_derivative(a, v); });
}

}  // namespace

void GnnModel::validate() const {
    if (layers.empty()) {
        throw ValidationError("GnnModel: need at least one layer");
    }
    for (std::size_t l = 1; l < layers.size(); ++l) {
        if (layers[l].bank.in_features() != layers[l - 1].bank.out_features()) {
            throw ShapeError("GnnModel: layer " + std::to_string(l) + " expects " +
                             std::to_string(layers[l].bank.in_features()) +
                             " input features but layer " + std::to_string(l - 1) +
                             " produces " + std::to_string(layers[l - 1].bank.out_features()));
        }
    }
    if (readout_weights.size() != output_features()) {
        throw ShapeError("GnnModel: readout size does not match the last layer's features");
    }
    if (node < 0) {
        throw ValidationError("GnnModel: negative node of interest");
    }
}

Index GnnModel::input_features() const { return layers.front().bank.in_features(); }
Index GnnModel::output_features() const { return layers.back().bank.out_features(); }
Index GnnModel::last_tap_count() const { return layers.back().bank.tap_count(); }

Index GnnModel::parameter_count() const {
    Index count = 0;
    for (const auto& l : layers) {
        count += static_cast<Index>(l.bank.raw().size());
    }
    return count + readout_weights.size() + 1;
}

std::vector<double> GnnModel::parameters() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(parameter_count()));
    for (const auto& l : layers) {
        const auto raw = l.bank.raw();
        out.insert(out.end(), raw.begin(), raw.end());
    }
    out.insert(out.end(), readout_weights.data(),
               readout_weights.data() + readout_weights.size());
    out.push_back(readout_bias);
    return out;
}

void GnnModel::set_parameters(std::span<const double> values) {
    if (static_cast<Index>(values.size()) != parameter_count()) {
        throw ShapeError("GnnModel::set_parameters: wrong parameter count");
    }
    std::size_t pos = 0;
    for (auto& l : layers) {
        auto raw = l.bank.raw();
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), raw.size(), raw.begin());
        pos += raw.size();
    }
    for (Index i = 0; i < readout_weights.size(); ++i) {
        readout_weights(i) = values[pos++];
    }
    readout_bias = values[pos];
}

GnnModel init_model(Index in_features, std::span<const LayerShape> layers, Index node,
                    std::uint64_t seed) {
    if (layers.empty()) {
        throw ValidationError("init_model: need at least one layer");
    }
    std::mt19937_64 rng(seed);
    GnnModel model;
    Index f_in = in_features;
    for (const auto& shape : layers) {
        filters::FilterBank bank(f_in, shape.out_features, shape.taps);
        const double bound = 1.0 / std::sqrt(static_cast<double>(f_in * shape.taps));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& h : bank.raw()) {
            h = u(rng);
        }
        model.layers.push_back({std::move(bank), shape.activation});
        f_in = shape.out_features;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(f_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    model.readout_weights.resize(f_in);
    for (Index i = 0; i < f_in; ++i) {
        model.readout_weights(i) = u(rng);
    }
    model.readout_bias = 0.0;
    model.node = node;
    model.validate();
    return model;
}

namespace {

void check_input(const GnnModel& model, const graph::Gso& shift, const Signal& x) {
    model.validate();
    if (x.rows() != shift.size()) {
        throw ShapeError("GNN: signal has " + std::to_string(x.rows()) +
                         " rows but the GSO has " + std::to_string(shift.size()) + " nodes");
    }
    if (x.cols() != model.input_features()) {
        throw ShapeError("GNN: signal has " + std::to_string(x.cols()) +
                         " features but the model expects " +
                         std::to_string(model.input_features()));
    }
    if (model.node >= shift.size()) {
        throw ShapeError("GNN: node of interest outside the graph");
    }
}

}  // namespace

Signal feature_map(const GnnModel& model, const graph::Gso& shift, const Signal& x) {
    check_input(model, shift, x);
    Signal h = x;
    for (const auto& layer : model.layers) {
        h = apply_activation(layer.activation, filters::filter_bank_apply(shift, layer.bank, h));
    }
    return h;
}

NodeProbes::NodeProbes(const graph::Gso& shift, Index node, Index tap_count)
    : node_(node), columns_(shift.size(), tap_count) {
    if (node < 0 || node >= shift.size()) {
        throw ShapeError("NodeProbes: node outside the graph");
    }
    if (tap_count < 1) {
        throw ValidationError("NodeProbes: need at least one tap");
    }
    columns_.col(0).setZero();
    columns_(node, 0) = 1.0;
    for (Index k = 1; k < tap_count; ++k) {
        columns_.col(k).noalias() = shift.matrix() * columns_.col(k - 1);
    }
}

NodeProbes make_probes(const GnnModel& model, const graph::Gso& shift) {
    model.validate();
    return NodeProbes(shift, model.node, model.last_tap_count());
}

ForwardResult forward(const GnnModel& model, const graph::Gso& shift, const Signal& x) {
    return forward(model, shift, make_probes(model, shift), x);
}

ForwardResult forward(const GnnModel& model, const graph::Gso& shift, const NodeProbes& probes,
                      const Signal& x) {
    check_input(model, shift, x);
    if (probes.node() != model.node || probes.columns().cols() != model.last_tap_count() ||
        probes.columns().rows() != shift.size()) {
        throw ShapeError("GNN forward: probes do not match the model and GSO");
    }
    ForwardResult result;
    auto& cache = result.cache;
    const std::size_t depth = model.layers.size();
    Signal h = x;
    for (std::size_t l = 0; l + 1 < depth; ++l) {
        const auto& layer = model.layers[l];
        std::vector<Signal> z;
        z.reserve(static_cast<std::size_t>(layer.bank.tap_count()));
        z.push_back(h);
        Signal pre = h * layer.bank.coefficient_matrix(0);
        for (Index k = 1; k < layer.bank.tap_count(); ++k) {
            z.push_back(shift.matrix() * z.back());
            pre.noalias() += z.back() * layer.bank.coefficient_matrix(k);
        }
        h = apply_activation(layer.activation, pre);
        cache.shifted.push_back(std::move(z));
        cache.pre_activations.push_back(std::move(pre));
    }
    const auto& last = model.layers.back();
    cache.last_shifted = probes.columns().transpose() * h;  // K x F_in
    cache.last_pre = Vector::Zero(last.bank.out_features());
    for (Index k = 0; k < last.bank.tap_count(); ++k) {
        cache.last_pre.noalias() +=
            last.bank.coefficient_matrix(k).transpose() * cache.last_shifted.row(k).transpose();
    }
    cache.last_features = apply_activation(last.activation, cache.last_pre);
    result.prediction = model.readout_weights.dot(cache.last_features) + model.readout_bias;
    return result;
}

double predict(const GnnModel& model, const graph::Gso& shift, const NodeProbes& probes,
               const Signal& x) {
    return forward(model, shift, probes, x).prediction;
}

Dataset::Dataset(std::vector<Sample> samples) : samples_(std::move(samples)) {
    if (samples_.empty()) {
        return;
    }
    const Index n = samples_.front().x.rows();
    for (const auto& s : samples_) {
        if (s.x.rows() != n || s.x.cols() != samples_.front().x.cols()) {
            throw ShapeError("Dataset: all signals must share one shape");
        }
    }
}

Index Dataset::node_count() const noexcept {
    return samples_.empty() ? 0 : samples_.front().x.rows();
}

std::vector<double> predict_all(const GnnModel& model, const graph::Gso& shift,
                                const Dataset& data) {
    const NodeProbes probes = make_probes(model, shift);
    std::vector<double> out;
    out.reserve(data.size());
    for (const auto& s : data.samples()) {
        out.push_back(predict(model, shift, probes, s.x));
    }
    return out;
}

double smooth_l1_loss(double prediction, double target, double beta) {
    const double r = std::abs(prediction - target);
    return r < beta ? 0.5 * r * r / beta : r - 0.5 * beta;
}

double smooth_l1_derivative(double prediction, double target, double beta) {
    const double r = prediction - target;
    if (std::abs(r) < beta) {
        return r / beta;
    }
    return r > 0.0 ? 1.0 : -1.0;
}

void TrainConfig::validate() const {
    if (!(mu >= 0.0)) throw ValidationError("TrainConfig: mu must be nonnegative");
    if (lambda_interval && !(lambda_interval->first < lambda_interval->second)) {
        throw ValidationError("TrainConfig: penalty interval must satisfy lambda_a < lambda_b");
    }
    if (grid_size < 2) throw ValidationError("TrainConfig: grid needs at least two points");
    if (!(learning_rate > 0.0) || !(beta1 > 0.0) || !(beta2 > 0.0) || !(epsilon_adam > 0.0)) {
        throw ValidationError("TrainConfig: rates must be positive");
    }
    if (!(beta1 < 1.0) || !(beta2 < 1.0)) {
        throw ValidationError("TrainConfig: forgetting factors must be below 1");
    }
    if (epochs < 0) throw ValidationError("TrainConfig: negative epoch count");
    if (batch_size < 1) throw ValidationError("TrainConfig: batch size must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["mu"] = c.mu;
    if (c.lambda_interval) {
        j["lambda_interval"] = {c.lambda_interval->first, c.lambda_interval->second};
    } else {
        j["lambda_interval"] = "gso-spectrum";
    }
    j["grid_size"] = c.grid_size;
    j["learning_rate"] = c.learning_rate;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["epsilon_adam"] = c.epsilon_adam;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["rng_seed"] = c.rng_seed;
    return j;
}

Vector penalty_grid(const TrainConfig& config, const graph::Gso& shift) {
    config.validate();
    double a = 0.0;
    double b = 0.0;
    if (config.lambda_interval) {
        std::tie(a, b) = *config.lambda_interval;
    } else {
        const Vector ev = spectral::eigenvalues(shift.matrix());
        a = ev(0);
        b = ev(ev.size() - 1);
        if (!(a < b)) {
            throw ValidationError("penalty_grid: GSO spectrum is a single point; set the "
                                  "penalty interval explicitly");
        }
    }
    return spectral::uniform_grid(a, b, config.grid_size);
}

namespace {

// Row i, column k: k * lambda_i^k, so (D h)_i = lambda_i h'(lambda_i).
Matrix scaled_derivative_basis(const Vector& grid, Index taps) {
    Matrix d(grid.size(), taps);
    for (Index i = 0; i < grid.size(); ++i) {
        double p = 1.0;
        for (Index k = 0; k < taps; ++k) {
            d(i, k) = static_cast<double>(k) * p;
            p *= grid(i);
        }
    }
    return d;
}

}  // namespace

PenaltyResult penalty(const GnnModel& model, const Vector& grid) {
    if (grid.size() == 0) {
        throw ValidationError("penalty: empty grid");
    }
    model.validate();
    PenaltyResult out;
    out.gradient.assign(static_cast<std::size_t>(model.parameter_count()), 0.0);
    std::size_t offset = 0;
    for (const auto& layer : model.layers) {
        const auto& bank = layer.bank;
        const Index k = bank.tap_count();
        const Matrix d = scaled_derivative_basis(grid, k);
        const auto raw = bank.raw();
        const Eigen::Map<const Matrix> taps(raw.data(), k, bank.filter_count());
        const Matrix values = d * taps;  // grid x filters
        for (Index c = 0; c < bank.filter_count(); ++c) {
            Index best = 0;
            double best_abs = -1.0;
            for (Index i = 0; i < values.rows(); ++i) {
                const double a = std::abs(values(i, c));
                if (a > best_abs) {
                    best_abs = a;
                    best = i;
                }
            }
            out.value += best_abs;
            const double v = values(best, c);
            const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
            for (Index j = 0; j < k; ++j) {
                out.gradient[offset + static_cast<std::size_t>(c * k + j)] = sign * d(best, j);
            }
        }
        offset += raw.size();
    }
    return out;
}

double max_lipschitz_constant(const GnnModel& model, const Vector& grid) {
    double best = 0.0;
    for (const auto& layer : model.layers) {
        const auto& bank = layer.bank;
        const Matrix d = scaled_derivative_basis(grid, bank.tap_count());
        const auto raw = bank.raw();
        const Eigen::Map<const Matrix> taps(raw.data(), bank.tap_count(), bank.filter_count());
        best = std::max(best, (d * taps).cwiseAbs().maxCoeff());
    }
    return best;
}

std::vector<double> backward(const GnnModel& model, const graph::Gso& shift,
                             const NodeProbes& probes, const Sample& sample,
                             const ForwardCache& cache, double mu, const Vector& grid) {
    model.validate();
    const std::size_t depth = model.layers.size();
    if (cache.empty() || cache.shifted.size() + 1 != depth ||
        cache.pre_activations.size() + 1 != depth ||
        cache.last_pre.size() != model.output_features()) {
        throw ValidationError("backward: forward cache is missing or does not match the model");
    }
    std::vector<double> grad(static_cast<std::size_t>(model.parameter_count()), 0.0);

    std::vector<std::size_t> offsets(depth);
    std::size_t pos = 0;
    for (std::size_t l = 0; l < depth; ++l) {
        offsets[l] = pos;
        pos += model.layers[l].bank.raw().size();
    }

    const double g = smooth_l1_derivative(
        model.readout_weights.dot(cache.last_features) + model.readout_bias, sample.y);
    for (Index i = 0; i < model.readout_weights.size(); ++i) {
        grad[pos + static_cast<std::size_t>(i)] = g * cache.last_features(i);
    }
    grad.back() = g;

    const auto& last = model.layers.back();
    const Vector delta = (g * model.readout_weights).cwiseProduct(
        activation_slope(last.activation, cache.last_pre));
    {
        const Index k_count = last.bank.tap_count();
        const Index f_out = last.bank.out_features();
        for (Index f = 0; f < last.bank.in_features(); ++f) {
            for (Index gg = 0; gg < f_out; ++gg) {
                for (Index k = 0; k < k_count; ++k) {
                    grad[offsets[depth - 1] + static_cast<std::size_t>((f * f_out + gg) * k_count + k)] =
                        cache.last_shifted(k, f) * delta(gg);
                }
            }
        }
    }

    if (depth > 1) {
        // Upstream gradient on x_{L-1}: sum_k r_k (H_k delta)^T with r_k = S^k e_n.
        Signal upstream = Signal::Zero(shift.size(), last.bank.in_features());
        for (Index k = 0; k < last.bank.tap_count(); ++k) {
            const Vector mixed = last.bank.coefficient_matrix(k) * delta;
            upstream.noalias() += probes.columns().col(k) * mixed.transpose();
        }
        for (std::size_t l = depth - 1; l-- > 0;) {
            const auto& layer = model.layers[l];
            const auto& bank = layer.bank;
            const Signal gpre = upstream.cwiseProduct(
                activation_slope(layer.activation, cache.pre_activations[l]));
            const Index k_count = bank.tap_count();
            const Index f_out = bank.out_features();
            for (Index k = 0; k < k_count; ++k) {
                const Matrix tg = cache.shifted[l][static_cast<std::size_t>(k)].transpose() * gpre;
                for (Index f = 0; f < bank.in_features(); ++f) {
                    for (Index gg = 0; gg < f_out; ++gg) {
                        grad[offsets[l] + static_cast<std::size_t>((f * f_out + gg) * k_count + k)] =
                            tg(f, gg);
                    }
                }
            }
            if (l > 0) {
                // sum_k S^k (gpre H_k^T), Horner from the highest tap (S symmetric).
                Signal acc = gpre * bank.coefficient_matrix(k_count - 1).transpose();
                for (Index k = k_count - 2; k >= 0; --k) {
                    acc = shift.matrix() * acc;
                    acc.noalias() += gpre * bank.coefficient_matrix(k).transpose();
                }
                upstream = std::move(acc);
            }
        }
    }

    if (mu != 0.0) {
        const PenaltyResult p = penalty(model, grid);
        for (std::size_t i = 0; i < grad.size(); ++i) {
            grad[i] += mu * p.gradient[i];
        }
    }
    return grad;
}

std::vector<double> backward(const GnnModel& model, const graph::Gso& shift,
                             const Sample& sample, const ForwardCache& cache,
                             const TrainConfig& config) {
    const Vector grid = config.mu != 0.0 ? penalty_grid(config, shift) : Vector::Zero(1);
    return backward(model, shift, make_probes(model, shift), sample, cache, config.mu, grid);
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> gradient,
               const TrainConfig& config) {
    if (params.size() != gradient.size() || params.size() != state.first.size()) {
        throw ShapeError("adam_step: parameter, gradient and state sizes differ");
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double gi = gradient[i];
        state.first[i] = config.beta1 * state.first[i] + (1.0 - config.beta1) * gi;
        state.second[i] = config.beta2 * state.second[i] + (1.0 - config.beta2) * gi * gi;
        const double m_hat = state.first[i] / c1;
        const double v_hat = state.second[i] / c2;
        params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon_adam);
    }
}

TrainResult train(GnnModel model, const graph::Gso& shift, const Dataset& train_set,
                  const TrainConfig& config) {
    config.validate();
    model.validate();
    if (train_set.empty()) {
        throw ValidationError("train: empty training set");
    }
    if (train_set.node_count() != shift.size()) {
        throw ShapeError("train: dataset signals and GSO sizes differ");
    }
    const Vector grid = penalty_grid(config, shift);
    const NodeProbes probes = make_probes(model, shift);

    TrainResult result{model, {}, {grid(0), grid(grid.size() - 1)}};
    GnnModel& m = result.model;
    std::vector<double> params = m.parameters();
    AdamState adam(params.size());
    std::vector<double> batch_grad(params.size());
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(config.rng_seed);
    const auto batch = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t stop = std::min(order.size(), start + batch);
            std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
            for (std::size_t b = start; b < stop; ++b) {
                const Sample& s = train_set[order[b]];
                const ForwardResult fr = forward(m, shift, probes, s.x);
                loss_sum += smooth_l1_loss(fr.prediction, s.y);
                const auto g = backward(m, shift, probes, s, fr.cache, 0.0, grid);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    batch_grad[i] += g[i];
                }
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (double& v : batch_grad) {
                v *= inv;
            }
            if (config.mu != 0.0) {
                const PenaltyResult p = penalty(m, grid);
                for (std::size_t i = 0; i < batch_grad.size(); ++i) {
                    batch_grad[i] += config.mu * p.gradient[i];
                }
            }
            adam_step(adam, params, batch_grad, config);
            m.set_parameters(params);
        }
        result.trace.push_back(
            {epoch, loss_sum / static_cast<double>(order.size()), penalty(m, grid).value});
    }
    return result;
}

void write_loss_trace(std::ostream& out, std::span<const EpochRecord> trace) {
    out << "epoch,loss,penalty\n";
    for (const auto& r : trace) {
        out << r.epoch << ',' << csv::format(r.loss) << ',' << csv::format(r.penalty) << '\n';
    }
}

void save_checkpoint(std::ostream& out, const GnnModel& model, const nlohmann::json& config) {
    model.validate();
    nlohmann::json j;
    j["format"] = "gnnstab-checkpoint";
    j["version"] = 1;
    j["node"] = model.node;
    j["input_features"] = model.input_features();
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : model.layers) {
        const auto raw = l.bank.raw();
        layers.push_back({{"in_features", l.bank.in_features()},
                          {"out_features", l.bank.out_features()},
                          {"taps", l.bank.tap_count()},
                          {"activation", to_string(l.activation)},
                          {"coefficients", std::vector<double>(raw.begin(), raw.end())}});
    }
    j["layers"] = std::move(layers);
    j["readout"] = {{"weights", std::vector<double>(model.readout_weights.data(),
                                                    model.readout_weights.data() +
                                                        model.readout_weights.size())},
                    {"bias", model.readout_bias}};
    j["config"] = config;
    out << j.dump(2) << '\n';
}

GnnModel load_checkpoint(std::istream& in, nlohmann::json* config_echo) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what(), 0);
    }
    try {
        if (j.at("format") != "gnnstab-checkpoint") {
            throw ValidationError("checkpoint: unrecognised format tag");
        }
        GnnModel model;
        model.node = j.at("node").get<Index>();
        for (const auto& l : j.at("layers")) {
            filters::FilterBank bank(l.at("in_features").get<Index>(),
                                     l.at("out_features").get<Index>(),
                                     l.at("taps").get<Index>(),
                                     l.at("coefficients").get<std::vector<double>>());
            model.layers.push_back(
                {std::move(bank), parse_activation(l.at("activation").get<std::string>())});
        }
        const auto w = j.at("readout").at("weights").get<std::vector<double>>();
        model.readout_weights = Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size()));
        model.readout_bias = j.at("readout").at("bias").get<double>();
        model.validate();
        if (config_echo != nullptr) {
            *config_echo = j.value("config", nlohmann::json::object());
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: ") + e.what());
    }
}

}  // namespace gnnstab::gnn
