#include "strip/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "strip/rng.hpp"

namespace strip {

LayerSpec LayerSpec::conv2d(int filters, int kernel) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.filters = filters;
    s.kernel = kernel;
    return s;
}

LayerSpec LayerSpec::max_pool(int window) {
    LayerSpec s;
    s.kind = LayerKind::pool;
    s.window = window;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
}

LayerSpec LayerSpec::dense(int width) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.width = width;
    return s;
}

LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = rate;
    return s;
}

TrainingDiverged::TrainingDiverged(int epoch_index)
    : std::runtime_error("training diverged (non-finite loss) at epoch " +
                         std::to_string(epoch_index)),
      epoch(epoch_index) {}

double TrainConfig::rate_at(int epoch) const {
    double rate = lr_schedule.empty() ? 0.0 : lr_schedule.front().second;
    for (const auto& [e, r] : lr_schedule)
        if (epoch >= e) rate = r;
    return rate;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (lr_schedule.empty()) throw std::invalid_argument("TrainConfig: empty lr schedule");
    for (const auto& [e, r] : lr_schedule) {
        if (e < 0) throw std::invalid_argument("TrainConfig: schedule epoch must be >= 0");
        if (r < 0.0 || !std::isfinite(r))
            throw std::invalid_argument("TrainConfig: learning rate must be >= 0");
    }
}

namespace {

// Resolved per-layer geometry: shapes and offsets into the flat parameter vector.
struct Geom {
    LayerKind kind;
    int in_h = 0, in_w = 0, in_c = 0;
    int out_h = 0, out_w = 0, out_c = 0;
    int filters = 0, kernel = 0;
    int window = 0;
    int in_dim = 0, out_dim = 0;  // dense
    std::size_t w_off = 0, b_off = 0;

    int in_size() const { return in_h * in_w * in_c; }
    int out_size() const { return out_h * out_w * out_c; }
};

std::vector<Geom> resolve_geometry(const ModelSpec& spec, std::size_t* param_count) {
    if (spec.in_height <= 0 || spec.in_width <= 0 || spec.in_channels <= 0)
        throw std::invalid_argument("ModelSpec: input dimensions must be positive");
    if (spec.classes < 2) throw std::invalid_argument("ModelSpec: at least 2 classes");
    if (spec.layers.empty()) throw std::invalid_argument("ModelSpec: no layers");

    std::vector<Geom> geoms;
    int h = spec.in_height, w = spec.in_width, c = spec.in_channels;
    std::size_t off = 0;
    for (const LayerSpec& l : spec.layers) {
        Geom g;
        g.kind = l.kind;
        g.in_h = h;
        g.in_w = w;
        g.in_c = c;
        switch (l.kind) {
            case LayerKind::conv: {
                if (l.filters < 1 || l.kernel < 1)
                    throw std::invalid_argument("conv layer: filters and kernel must be >= 1");
                if (l.kernel > h || l.kernel > w)
                    throw std::invalid_argument("conv layer: kernel exceeds input size");
                g.filters = l.filters;
                g.kernel = l.kernel;
                g.out_h = h - l.kernel + 1;
                g.out_w = w - l.kernel + 1;
                g.out_c = l.filters;
                g.w_off = off;
                off += static_cast<std::size_t>(l.filters) * l.kernel * l.kernel * c;
                g.b_off = off;
                off += l.filters;
                break;
            }
            case LayerKind::pool: {
                if (l.window < 1 || l.window > h || l.window > w)
                    throw std::invalid_argument("pool layer: bad window");
                g.window = l.window;
                g.out_h = h / l.window;
                g.out_w = w / l.window;
                g.out_c = c;
                if (g.out_h < 1 || g.out_w < 1)
                    throw std::invalid_argument("pool layer: output collapses to zero");
                break;
            }
            case LayerKind::relu:
            case LayerKind::dropout: {
                g.out_h = h;
                g.out_w = w;
                g.out_c = c;
                break;
            }
            case LayerKind::dense: {
                if (l.width < 1) throw std::invalid_argument("dense layer: width must be >= 1");
                g.in_dim = h * w * c;
                g.out_dim = l.width;
                g.out_h = 1;
                g.out_w = 1;
                g.out_c = l.width;
                g.w_off = off;
                off += static_cast<std::size_t>(l.width) * g.in_dim;
                g.b_off = off;
                off += l.width;
                break;
            }
        }
        h = g.out_h;
        w = g.out_w;
        c = g.out_c;
        geoms.push_back(g);
    }
    const LayerSpec& last = spec.layers.back();
    if (last.kind != LayerKind::dense || last.width != spec.classes)
        throw std::invalid_argument("ModelSpec: last layer must be dense:<classes>");
    if (param_count) *param_count = off;
    return geoms;
}

struct Workspace {
    std::vector<std::vector<double>> act;       // act[0] = input, act[i+1] = layer i output
    std::vector<std::vector<int>> pool_arg;     // argmax source index per pool layer
    std::vector<std::vector<double>> dact;      // gradient buffers, same shapes as act
    ProbVector probs;

    explicit Workspace(const std::vector<Geom>& geoms) {
        act.resize(geoms.size() + 1);
        dact.resize(geoms.size() + 1);
        pool_arg.resize(geoms.size());
        act[0].resize(geoms.front().in_size());
        dact[0].resize(geoms.front().in_size());
        for (std::size_t i = 0; i < geoms.size(); ++i) {
            act[i + 1].resize(geoms[i].out_size());
            dact[i + 1].resize(geoms[i].out_size());
            if (geoms[i].kind == LayerKind::pool) pool_arg[i].resize(geoms[i].out_size());
        }
        probs.resize(geoms.back().out_size());
    }
};

void forward_layers(const std::vector<Geom>& geoms, const double* theta, Workspace& ws) {
    for (std::size_t i = 0; i < geoms.size(); ++i) {
        const Geom& g = geoms[i];
        const double* in = ws.act[i].data();
        double* out = ws.act[i + 1].data();
        switch (g.kind) {
            case LayerKind::conv: {
                const int K = g.kernel, C = g.in_c, F = g.filters;
                const int row = K * C;
                const double* wts = theta + g.w_off;
                const double* bias = theta + g.b_off;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        double* o = out + (static_cast<std::size_t>(oy) * g.out_w + ox) * F;
                        for (int f = 0; f < F; ++f) {
                            const double* wf = wts + static_cast<std::size_t>(f) * K * row;
                            double acc = bias[f];
                            for (int ky = 0; ky < K; ++ky) {
                                const double* ir =
                                    in + (static_cast<std::size_t>(oy + ky) * g.in_w + ox) * C;
                                const double* wr = wf + static_cast<std::size_t>(ky) * row;
                                for (int t = 0; t < row; ++t) acc += ir[t] * wr[t];
                            }
                            o[f] = acc;
                        }
                    }
                }
                break;
            }
            case LayerKind::pool: {
                const int W = g.window, C = g.in_c;
                int* arg = ws.pool_arg[i].data();
                for (int oy = 0; oy < g.out_h; ++oy) {
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        for (int ch = 0; ch < C; ++ch) {
                            double best = -1e300;
                            int best_idx = 0;
                            for (int ky = 0; ky < W; ++ky) {
                                for (int kx = 0; kx < W; ++kx) {
                                    int iy = oy * W + ky, ix = ox * W + kx;
                                    int idx = (iy * g.in_w + ix) * C + ch;
                                    if (in[idx] > best) {
                                        best = in[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                            int oidx = (oy * g.out_w + ox) * C + ch;
                            out[oidx] = best;
                            arg[oidx] = best_idx;
                        }
                    }
                }
                break;
            }
            case LayerKind::relu: {
                const int n = g.out_size();
                for (int t = 0; t < n; ++t) out[t] = in[t] > 0.0 ? in[t] : 0.0;
                break;
            }
            case LayerKind::dropout: {
                std::copy(ws.act[i].begin(), ws.act[i].end(), out);
                break;
            }
            case LayerKind::dense: {
                const double* wts = theta + g.w_off;
                const double* bias = theta + g.b_off;
                for (int o = 0; o < g.out_dim; ++o) {
                    const double* wr = wts + static_cast<std::size_t>(o) * g.in_dim;
                    double acc = bias[o];
                    for (int t = 0; t < g.in_dim; ++t) acc += wr[t] * in[t];
                    out[o] = acc;
                }
                break;
            }
        }
    }
}

void softmax_from_logits(const std::vector<double>& logits, ProbVector& probs) {
    double m = logits[0];
    for (double v : logits) m = std::max(m, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - m);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
}

// Returns cross-entropy loss; leaves dlogits in ws.dact.back().
double loss_and_dlogits(const std::vector<Geom>& geoms, Workspace& ws, int label) {
    const std::vector<double>& logits = ws.act.back();
    softmax_from_logits(logits, ws.probs);
    double m = logits[0];
    for (double v : logits) m = std::max(m, v);
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - m);
    lse = m + std::log(lse);
    double loss = lse - logits[label];
    std::vector<double>& dl = ws.dact.back();
    for (std::size_t i = 0; i < logits.size(); ++i)
        dl[i] = ws.probs[i] - (static_cast<int>(i) == label ? 1.0 : 0.0);
    (void)geoms;
    return loss;
}

void backward_layers(const std::vector<Geom>& geoms, const double* theta, Workspace& ws,
                     double* grad) {
    for (std::size_t ii = geoms.size(); ii-- > 0;) {
        const Geom& g = geoms[ii];
        const double* in = ws.act[ii].data();
        const double* gout = ws.dact[ii + 1].data();
        double* gin = ws.dact[ii].data();
        switch (g.kind) {
            case LayerKind::conv: {
                const int K = g.kernel, C = g.in_c, F = g.filters;
                const int row = K * C;
                const double* wts = theta + g.w_off;
                double* gw = grad + g.w_off;
                double* gb = grad + g.b_off;
                std::fill(ws.dact[ii].begin(), ws.dact[ii].end(), 0.0);
                for (int oy = 0; oy < g.out_h; ++oy) {
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const double* go = gout + (static_cast<std::size_t>(oy) * g.out_w + ox) * F;
                        for (int f = 0; f < F; ++f) {
                            const double gv = go[f];
                            if (gv == 0.0) continue;
                            gb[f] += gv;
                            const double* wf = wts + static_cast<std::size_t>(f) * K * row;
                            double* gwf = gw + static_cast<std::size_t>(f) * K * row;
                            for (int ky = 0; ky < K; ++ky) {
                                const std::size_t base =
                                    (static_cast<std::size_t>(oy + ky) * g.in_w + ox) * C;
                                const double* ir = in + base;
                                double* gr = gin + base;
                                const double* wr = wf + static_cast<std::size_t>(ky) * row;
                                double* gwr = gwf + static_cast<std::size_t>(ky) * row;
                                for (int t = 0; t < row; ++t) {
                                    gwr[t] += gv * ir[t];
                                    gr[t] += gv * wr[t];
                                }
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::pool: {
                std::fill(ws.dact[ii].begin(), ws.dact[ii].end(), 0.0);
                const int n = g.out_size();
                const int* arg = ws.pool_arg[ii].data();
                for (int t = 0; t < n; ++t) gin[arg[t]] += gout[t];
                break;
            }
            case LayerKind::relu: {
                const int n = g.out_size();
                const double* out = ws.act[ii + 1].data();
                for (int t = 0; t < n; ++t) gin[t] = out[t] > 0.0 ? gout[t] : 0.0;
                break;
            }
            case LayerKind::dropout: {
                std::copy(ws.dact[ii + 1].begin(), ws.dact[ii + 1].end(), gin);
                break;
            }
            case LayerKind::dense: {
                const double* wts = theta + g.w_off;
                double* gw = grad + g.w_off;
                double* gb = grad + g.b_off;
                std::fill(ws.dact[ii].begin(), ws.dact[ii].end(), 0.0);
                for (int o = 0; o < g.out_dim; ++o) {
                    const double gv = gout[o];
                    gb[o] += gv;
                    const double* wr = wts + static_cast<std::size_t>(o) * g.in_dim;
                    double* gwr = gw + static_cast<std::size_t>(o) * g.in_dim;
                    if (gv == 0.0) continue;
                    for (int t = 0; t < g.in_dim; ++t) {
                        gwr[t] += gv * in[t];
                        gin[t] += gv * wr[t];
                    }
                }
                break;
            }
        }
    }
}

void check_input(const ModelSpec& spec, const Image& x) {
    if (x.height() != spec.in_height || x.width() != spec.in_width ||
        x.channels() != spec.in_channels)
        throw std::invalid_argument("input image dimensions do not match model input spec");
}

void check_labels(const LabeledDataset& data, int classes) {
    if (data.empty()) throw std::invalid_argument("dataset is empty");
    for (int l : data.labels)
        if (l < 0 || l >= classes)
            throw std::invalid_argument("label out of range for model class count");
}

}  // namespace

struct NnInternal {
    static std::vector<Geom> geoms(const Classifier& m) {
        return resolve_geometry(m.spec_, nullptr);
    }
};

Classifier::Classifier(ModelSpec spec) : spec_(std::move(spec)) {
    std::size_t n = 0;
    resolve_geometry(spec_, &n);
    theta_.assign(n, 0.0);
}

Classifier::Classifier(ModelSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
    std::size_t n = 0;
    std::vector<Geom> geoms = resolve_geometry(spec_, &n);
    theta_.assign(n, 0.0);
    Rng rng(derive_seed(init_seed, 0x1717));
    for (const Geom& g : geoms) {
        if (g.kind == LayerKind::conv) {
            double fan_in = static_cast<double>(g.kernel) * g.kernel * g.in_c;
            double fan_out = static_cast<double>(g.kernel) * g.kernel * g.filters;
            double limit = std::sqrt(6.0 / (fan_in + fan_out));
            std::size_t count = static_cast<std::size_t>(g.filters) * g.kernel * g.kernel * g.in_c;
            for (std::size_t t = 0; t < count; ++t)
                theta_[g.w_off + t] = rng.uniform(-limit, limit);
        } else if (g.kind == LayerKind::dense) {
            double limit = std::sqrt(6.0 / (static_cast<double>(g.in_dim) + g.out_dim));
            std::size_t count = static_cast<std::size_t>(g.out_dim) * g.in_dim;
            for (std::size_t t = 0; t < count; ++t)
                theta_[g.w_off + t] = rng.uniform(-limit, limit);
        }
    }
}

ProbVector Classifier::forward(const Image& x) const {
    check_input(spec_, x);
    std::vector<Geom> geoms = resolve_geometry(spec_, nullptr);
    Workspace ws(geoms);
    ws.act[0] = x.pixels();
    forward_layers(geoms, theta_.data(), ws);
    softmax_from_logits(ws.act.back(), ws.probs);
    return ws.probs;
}

int Classifier::predict_label(const Image& x) const {
    ProbVector p = forward(x);
    int best = 0;
    for (int i = 1; i < static_cast<int>(p.size()); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

bool Classifier::operator==(const Classifier& o) const {
    if (!(spec_ == o.spec_) || theta_.size() != o.theta_.size()) return false;
    return theta_.empty() ||
           std::memcmp(theta_.data(), o.theta_.data(), theta_.size() * sizeof(double)) == 0;
}

struct InferenceSession::Impl {
    std::vector<Geom> geoms;
    Workspace ws;
    explicit Impl(const Classifier& m) : geoms(NnInternal::geoms(m)), ws(geoms) {}
};

InferenceSession::InferenceSession(const Classifier& model)
    : model_(&model), impl_(std::make_unique<Impl>(model)) {}
InferenceSession::~InferenceSession() = default;
InferenceSession::InferenceSession(InferenceSession&&) noexcept = default;
InferenceSession& InferenceSession::operator=(InferenceSession&&) noexcept = default;

const ProbVector& InferenceSession::forward(const Image& x) {
    check_input(model_->spec(), x);
    impl_->ws.act[0] = x.pixels();
    forward_layers(impl_->geoms, model_->parameters().data(), impl_->ws);
    softmax_from_logits(impl_->ws.act.back(), impl_->ws.probs);
    return impl_->ws.probs;
}

int InferenceSession::predict_label(const Image& x) {
    const ProbVector& p = forward(x);
    int best = 0;
    for (int i = 1; i < static_cast<int>(p.size()); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

double batch_loss_and_gradient(const Classifier& model, const LabeledDataset& data,
                               const std::vector<int>& indices, std::vector<double>& grad) {
    if (indices.empty()) throw std::invalid_argument("batch_loss_and_gradient: empty batch");
    std::vector<Geom> geoms = NnInternal::geoms(model);
    Workspace ws(geoms);
    grad.assign(model.parameter_count(), 0.0);
    double loss_sum = 0.0;
    for (int idx : indices) {
        check_input(model.spec(), data.images[idx]);
        ws.act[0] = data.images[idx].pixels();
        forward_layers(geoms, model.parameters().data(), ws);
        loss_sum += loss_and_dlogits(geoms, ws, data.labels[idx]);
        backward_layers(geoms, model.parameters().data(), ws, grad.data());
    }
    const double inv = 1.0 / static_cast<double>(indices.size());
    for (double& g : grad) g *= inv;
    return loss_sum * inv;
}

double dataset_mean_loss(const Classifier& model, const LabeledDataset& data) {
    if (data.empty()) throw std::invalid_argument("dataset is empty");
    std::vector<Geom> geoms = NnInternal::geoms(model);
    Workspace ws(geoms);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        ws.act[0] = data.images[i].pixels();
        forward_layers(geoms, model.parameters().data(), ws);
        loss_sum += loss_and_dlogits(geoms, ws, data.labels[i]);
    }
    return loss_sum / static_cast<double>(data.size());
}

TrainResult train(Classifier model, const LabeledDataset& data, const TrainConfig& cfg) {
    cfg.validate();
    check_labels(data, model.classes());

    std::vector<Geom> geoms = NnInternal::geoms(model);
    Workspace ws(geoms);
    std::vector<double> grad(model.parameter_count());
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    const int n = static_cast<int>(data.size());
    std::vector<double> epoch_loss;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        const double lr = cfg.rate_at(epoch);
        double loss_sum = 0.0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int stop = std::min(n, start + cfg.batch_size);
            const int count = stop - start;
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (int k = start; k < stop; ++k) {
                const int idx = order[k];
                check_input(model.spec(), data.images[idx]);
                ws.act[0] = data.images[idx].pixels();
                forward_layers(geoms, model.parameters().data(), ws);
                batch_loss += loss_and_dlogits(geoms, ws, data.labels[idx]);
                backward_layers(geoms, model.parameters().data(), ws, grad.data());
            }
            if (!std::isfinite(batch_loss)) throw TrainingDiverged(epoch);
            loss_sum += batch_loss;
            const double step = lr / static_cast<double>(count);
            if (step != 0.0) {
                double* theta = model.parameters().data();
                for (std::size_t t = 0; t < grad.size(); ++t) theta[t] -= step * grad[t];
            }
        }
        const double mean_loss = loss_sum / static_cast<double>(n);
        if (!std::isfinite(mean_loss)) throw TrainingDiverged(epoch);
        epoch_loss.push_back(mean_loss);
    }
    return TrainResult{std::move(model), std::move(epoch_loss)};
}

double evaluate_accuracy(const Classifier& model, const LabeledDataset& data) {
    if (data.empty()) throw std::invalid_argument("dataset is empty");
    std::vector<Geom> geoms = NnInternal::geoms(model);
    Workspace ws(geoms);
    int hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        check_input(model.spec(), data.images[i]);
        ws.act[0] = data.images[i].pixels();
        forward_layers(geoms, model.parameters().data(), ws);
        const std::vector<double>& logits = ws.act.back();
        int best = 0;
        for (int k = 1; k < static_cast<int>(logits.size()); ++k)
            if (logits[k] > logits[best]) best = k;
        if (best == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

ModelSpec parse_model_spec(const std::string& text, int in_h, int in_w, int in_c, int classes) {
    ModelSpec spec;
    spec.in_height = in_h;
    spec.in_width = in_w;
    spec.in_channels = in_c;
    spec.classes = classes;

    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.erase(tok.begin());
        while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t')) tok.pop_back();
        if (tok.empty()) continue;
        auto colon = tok.find(':');
        std::string head = tok.substr(0, colon);
        std::string arg = colon == std::string::npos ? "" : tok.substr(colon + 1);
        if (head == "conv") {
            auto x = arg.find('x');
            if (x == std::string::npos)
                throw std::invalid_argument("model spec: conv needs <filters>x<kernel>: " + tok);
            spec.layers.push_back(
                LayerSpec::conv2d(std::stoi(arg.substr(0, x)), std::stoi(arg.substr(x + 1))));
        } else if (head == "pool") {
            spec.layers.push_back(LayerSpec::max_pool(arg.empty() ? 2 : std::stoi(arg)));
        } else if (head == "relu") {
            spec.layers.push_back(LayerSpec::relu());
        } else if (head == "dense") {
            if (arg.empty()) throw std::invalid_argument("model spec: dense needs a width");
            spec.layers.push_back(LayerSpec::dense(std::stoi(arg)));
        } else if (head == "dropout") {
            spec.layers.push_back(LayerSpec::dropout(arg.empty() ? 0.0 : std::stod(arg)));
        } else {
            throw std::invalid_argument("model spec: unknown layer token: " + tok);
        }
    }
    if (spec.layers.empty() || spec.layers.back().kind != LayerKind::dense ||
        spec.layers.back().width != classes)
        spec.layers.push_back(LayerSpec::dense(classes));
    return spec;
}

std::string model_spec_to_string(const ModelSpec& spec) {
    std::string out;
    for (const LayerSpec& l : spec.layers) {
        if (!out.empty()) out += ",";
        switch (l.kind) {
            case LayerKind::conv:
                out += "conv:" + std::to_string(l.filters) + "x" + std::to_string(l.kernel);
                break;
            case LayerKind::pool:
                out += "pool:" + std::to_string(l.window);
                break;
            case LayerKind::relu:
                out += "relu";
                break;
            case LayerKind::dense:
                out += "dense:" + std::to_string(l.width);
                break;
            case LayerKind::dropout: {
                char buf[32];
                std::snprintf(buf, sizeof buf, "dropout:%g", l.rate);
                out += buf;
                break;
            }
        }
    }
    return out;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    put_u32(os, static_cast<std::uint32_t>(v));
    put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("model checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
    std::uint64_t lo = get_u32(is);
    std::uint64_t hi = get_u32(is);
    return lo | (hi << 32);
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

constexpr char kModelMagic[8] = {'S', 'T', 'R', 'P', 'M', 'D', 'L', '1'};

}  // namespace

void save_model(const Classifier& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os.write(kModelMagic, 8);
    const ModelSpec& s = model.spec();
    put_u32(os, static_cast<std::uint32_t>(s.in_height));
    put_u32(os, static_cast<std::uint32_t>(s.in_width));
    put_u32(os, static_cast<std::uint32_t>(s.in_channels));
    put_u32(os, static_cast<std::uint32_t>(s.classes));
    put_u32(os, static_cast<std::uint32_t>(s.layers.size()));
    for (const LayerSpec& l : s.layers) {
        put_u32(os, static_cast<std::uint32_t>(l.kind));
        put_u32(os, static_cast<std::uint32_t>(l.filters));
        put_u32(os, static_cast<std::uint32_t>(l.kernel));
        put_u32(os, static_cast<std::uint32_t>(l.width));
        put_u32(os, static_cast<std::uint32_t>(l.window));
        put_f64(os, l.rate);
    }
    put_u64(os, model.parameter_count());
    for (double v : model.parameters()) put_f64(os, v);
    if (!os) throw std::runtime_error("write failed: " + path);
}

Classifier load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open model checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kModelMagic, 8) != 0)
        throw std::runtime_error("model checkpoint: bad magic: " + path);
    ModelSpec s;
    s.in_height = static_cast<int>(get_u32(is));
    s.in_width = static_cast<int>(get_u32(is));
    s.in_channels = static_cast<int>(get_u32(is));
    s.classes = static_cast<int>(get_u32(is));
    std::uint32_t n_layers = get_u32(is);
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        LayerSpec l;
        l.kind = static_cast<LayerKind>(get_u32(is));
        l.filters = static_cast<int>(get_u32(is));
        l.kernel = static_cast<int>(get_u32(is));
        l.width = static_cast<int>(get_u32(is));
        l.window = static_cast<int>(get_u32(is));
        l.rate = get_f64(is);
        s.layers.push_back(l);
    }
    Classifier model(s);
    std::uint64_t count = get_u64(is);
    if (count != model.parameter_count())
        throw std::runtime_error("model checkpoint: parameter count mismatch");
    for (std::uint64_t i = 0; i < count; ++i) model.parameters()[i] = get_f64(is);
    return model;
}

}  // namespace strip
