#include "cogc/fl_core.hpp"

#include "cogc/errors.hpp"
#include "cogc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace cogc::fl {

namespace {

// Softmax cross-entropy forward pass; returns loss and fills probabilities.
// Scalar std::exp keeps results independent of SIMD packet-math paths.
double softmax_xent(const Eigen::VectorXd& logits, int label, Eigen::VectorXd& probs) {
    const double peak = logits.maxCoeff();
    probs.resize(logits.size());
    double z = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        probs(i) = std::exp(logits(i) - peak);
        z += probs(i);
    }
    probs /= z;
    return std::log(z) + peak - logits(label);
}

struct LogisticView {
    // Row c of the weight block maps to params[c * (d+1) .. c * (d+1) + d].
    static Eigen::VectorXd logits(const ModelSpec& spec, const Eigen::VectorXd& params,
                                  const Eigen::RowVectorXd& x) {
        const int d = spec.feature_dim;
        Eigen::VectorXd out(spec.classes);
        for (int c = 0; c < spec.classes; ++c) {
            const auto w = params.segment(c * (d + 1), d);
            out(c) = x * w + params(c * (d + 1) + d);
        }
        return out;
    }

    static void accumulate_grad(const ModelSpec& spec, const Eigen::RowVectorXd& x,
                                const Eigen::VectorXd& probs, int label,
                                Eigen::VectorXd& grad) {
        const int d = spec.feature_dim;
        for (int c = 0; c < spec.classes; ++c) {
            const double coeff = probs(c) - (c == label ? 1.0 : 0.0);
            grad.segment(c * (d + 1), d) += coeff * x.transpose();
            grad(c * (d + 1) + d) += coeff;
        }
    }
};

struct MlpView {
    // params = [W1 : hidden x (d+1)] then [W2 : classes x (hidden+1)].
    static int w1_size(const ModelSpec& s) { return s.hidden * (s.feature_dim + 1); }

    static Eigen::VectorXd hidden_act(const ModelSpec& spec, const Eigen::VectorXd& params,
                                      const Eigen::RowVectorXd& x) {
        const int d = spec.feature_dim;
        Eigen::VectorXd h(spec.hidden);
        for (int j = 0; j < spec.hidden; ++j) {
            const auto w = params.segment(j * (d + 1), d);
            const double pre = x * w + params(j * (d + 1) + d);
            h(j) = pre > 0.0 ? pre : 0.0;
        }
        return h;
    }

    static Eigen::VectorXd logits_from_hidden(const ModelSpec& spec,
                                              const Eigen::VectorXd& params,
                                              const Eigen::VectorXd& h) {
        const int base = w1_size(spec);
        Eigen::VectorXd out(spec.classes);
        for (int c = 0; c < spec.classes; ++c) {
            const auto w = params.segment(base + c * (spec.hidden + 1), spec.hidden);
            out(c) = w.dot(h) + params(base + c * (spec.hidden + 1) + spec.hidden);
        }
        return out;
    }

    static void accumulate_grad(const ModelSpec& spec, const Eigen::VectorXd& params,
                                const Eigen::RowVectorXd& x, const Eigen::VectorXd& h,
                                const Eigen::VectorXd& probs, int label,
                                Eigen::VectorXd& grad) {
        const int d = spec.feature_dim;
        const int base = w1_size(spec);
        Eigen::VectorXd dh = Eigen::VectorXd::Zero(spec.hidden);
        for (int c = 0; c < spec.classes; ++c) {
            const double coeff = probs(c) - (c == label ? 1.0 : 0.0);
            grad.segment(base + c * (spec.hidden + 1), spec.hidden) += coeff * h;
            grad(base + c * (spec.hidden + 1) + spec.hidden) += coeff;
            dh += coeff * params.segment(base + c * (spec.hidden + 1), spec.hidden);
        }
        const Eigen::VectorXd dpre =
            (h.array() > 0.0).select(dh, Eigen::VectorXd::Zero(spec.hidden));
        for (int j = 0; j < spec.hidden; ++j) {
            grad.segment(j * (d + 1), d) += dpre(j) * x.transpose();
            grad(j * (d + 1) + d) += dpre(j);
        }
    }
};

Eigen::VectorXd sample_logits(const ModelSpec& spec, const Eigen::VectorXd& params,
                              const Eigen::RowVectorXd& x) {
    if (spec.kind == ModelSpec::Kind::logistic) return LogisticView::logits(spec, params, x);
    return MlpView::logits_from_hidden(spec, params, MlpView::hidden_act(spec, params, x));
}

}  // namespace

int param_dim(const ModelSpec& spec) {
    if (spec.kind == ModelSpec::Kind::logistic)
        return spec.classes * (spec.feature_dim + 1);
    return spec.hidden * (spec.feature_dim + 1) + spec.classes * (spec.hidden + 1);
}

Eigen::VectorXd init_params(const ModelSpec& spec, std::uint64_t stream_key) {
    const int dim = param_dim(spec);
    if (spec.kind == ModelSpec::Kind::logistic) return Eigen::VectorXd::Zero(dim);
    // Fan-in scaled random init; symmetry breaking for the hidden layer.
    rng::Stream stream(stream_key);
    Eigen::VectorXd params(dim);
    const int w1 = spec.hidden * (spec.feature_dim + 1);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(spec.feature_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden));
    for (int i = 0; i < dim; ++i)
        params(i) = (i < w1 ? s1 : s2) * stream.next_gaussian();
    return params;
}

Dataset make_blobs(int classes, int feature_dim, int samples, double center_radius,
                   double noise_sigma, std::uint64_t centers_key,
                   std::uint64_t samples_key) {
    if (classes < 2) throw InvalidParams("blobs need at least 2 classes");
    if (feature_dim < 1 || samples < 1) throw InvalidParams("bad blob dimensions");
    rng::Stream center_stream(centers_key);
    Eigen::MatrixXd centers(classes, feature_dim);
    for (int c = 0; c < classes; ++c) {
        Eigen::RowVectorXd dir(feature_dim);
        for (int j = 0; j < feature_dim; ++j) dir(j) = center_stream.next_gaussian();
        centers.row(c) = dir * (center_radius / dir.norm());
    }
    rng::Stream stream(samples_key);
    Dataset data;
    data.classes = classes;
    data.features.resize(samples, feature_dim);
    data.labels.resize(samples);
    for (int i = 0; i < samples; ++i) {
        const int label = i % classes;
        data.labels[i] = label;
        for (int j = 0; j < feature_dim; ++j)
            data.features(i, j) = centers(label, j) + noise_sigma * stream.next_gaussian();
    }
    return data;
}

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    std::uint8_t raw[4];
    if (!in.read(reinterpret_cast<char*>(raw), 4))
        throw ConfigError("idx file truncated: " + path);
    return (std::uint32_t(raw[0]) << 24) | (std::uint32_t(raw[1]) << 16) |
           (std::uint32_t(raw[2]) << 8) | std::uint32_t(raw[3]);
}

}  // namespace

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw ConfigError("cannot open idx image file: " + images_path);
    if (read_be_u32(img, images_path) != 0x00000803u)
        throw ConfigError("bad idx image magic in " + images_path);
    const std::uint32_t count = read_be_u32(img, images_path);
    const std::uint32_t rows = read_be_u32(img, images_path);
    const std::uint32_t cols = read_be_u32(img, images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw ConfigError("cannot open idx label file: " + labels_path);
    if (read_be_u32(lab, labels_path) != 0x00000801u)
        throw ConfigError("bad idx label magic in " + labels_path);
    if (read_be_u32(lab, labels_path) != count)
        throw ConfigError("idx image/label counts differ");

    Dataset data;
    const int dim = static_cast<int>(rows * cols);
    data.features.resize(count, dim);
    data.labels.resize(count);
    std::vector<std::uint8_t> pixel_row(dim);
    int max_label = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!img.read(reinterpret_cast<char*>(pixel_row.data()), dim))
            throw ConfigError("idx image data truncated: " + images_path);
        for (int j = 0; j < dim; ++j)
            data.features(i, j) = pixel_row[j] / 255.0;
        char label = 0;
        if (!lab.read(&label, 1))
            throw ConfigError("idx label data truncated: " + labels_path);
        data.labels[i] = static_cast<std::uint8_t>(label);
        max_label = std::max(max_label, data.labels[i]);
    }
    data.classes = max_label + 1;
    return data;
}

PartitionResult partition_dataset(const Dataset& data, int clients, PartitionKind kind,
                                  int skew_classes, std::uint64_t seed) {
    if (clients < 1) throw InvalidParams("client count must be at least 1");
    if (data.size() < clients) throw InfeasibleSkew("fewer samples than clients");

    rng::Stream stream(rng::key(seed, rng::Tag::partition));
    auto shuffled = [&](std::vector<int> v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[stream.next_index(i)]);
        return v;
    };

    std::vector<std::vector<int>> assignment(clients);
    if (kind == PartitionKind::iid) {
        std::vector<int> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        order = shuffled(std::move(order));
        const int per = data.size() / clients;
        for (int m = 0; m < clients; ++m)
            assignment[m].assign(order.begin() + m * per, order.begin() + (m + 1) * per);
    } else {
        const int c_count = data.classes;
        if (skew_classes < 1 || skew_classes > c_count)
            throw InfeasibleSkew("skew class count must lie in [1, classes]");
        if ((clients * skew_classes) % c_count != 0)
            throw InfeasibleSkew("M * k must be divisible by the class count");
        const int holders = clients * skew_classes / c_count;

        std::vector<std::vector<int>> by_class(c_count);
        for (int i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
        int chunk = std::numeric_limits<int>::max();
        for (int c = 0; c < c_count; ++c) {
            by_class[c] = shuffled(std::move(by_class[c]));
            chunk = std::min(chunk, static_cast<int>(by_class[c].size()) / holders);
        }
        if (chunk < 1) throw InfeasibleSkew("not enough samples per class for this skew");

        std::vector<int> next_chunk(c_count, 0);
        for (int m = 0; m < clients; ++m) {
            for (int j = 0; j < skew_classes; ++j) {
                const int c = (m * skew_classes + j) % c_count;
                const int begin = next_chunk[c]++ * chunk;
                assignment[m].insert(assignment[m].end(), by_class[c].begin() + begin,
                                     by_class[c].begin() + begin + chunk);
            }
        }
    }

    PartitionResult result;
    result.shards.resize(clients);
    result.weights.resize(clients);
    std::int64_t total = 0;
    for (const auto& idx : assignment) total += static_cast<std::int64_t>(idx.size());
    for (int m = 0; m < clients; ++m) {
        const auto& idx = assignment[m];
        Dataset shard;
        shard.classes = data.classes;
        shard.features.resize(idx.size(), data.dim());
        shard.labels.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            shard.features.row(i) = data.features.row(idx[i]);
            shard.labels[i] = data.labels[idx[i]];
        }
        result.shards[m] = std::move(shard);
        result.weights[m] = static_cast<double>(idx.size()) / static_cast<double>(total);
    }
    return result;
}

double minibatch_gradient(const ModelSpec& spec, const Eigen::VectorXd& params,
                          const Dataset& data, const std::vector<int>& indices,
                          Eigen::VectorXd& grad_out) {
    grad_out.setZero(param_dim(spec));
    double loss = 0.0;
    Eigen::VectorXd probs;
    for (int idx : indices) {
        const Eigen::RowVectorXd x = data.features.row(idx);
        const int label = data.labels[idx];
        if (spec.kind == ModelSpec::Kind::logistic) {
            const Eigen::VectorXd z = LogisticView::logits(spec, params, x);
            loss += softmax_xent(z, label, probs);
            LogisticView::accumulate_grad(spec, x, probs, label, grad_out);
        } else {
            const Eigen::VectorXd h = MlpView::hidden_act(spec, params, x);
            const Eigen::VectorXd z = MlpView::logits_from_hidden(spec, params, h);
            loss += softmax_xent(z, label, probs);
            MlpView::accumulate_grad(spec, params, x, h, probs, label, grad_out);
        }
    }
    const double inv = 1.0 / static_cast<double>(indices.size());
    grad_out *= inv;
    return loss * inv;
}

GradEnvelope local_sgd(ClientState& client, const ModelSpec& spec, int steps, double eta,
                       int batch, std::uint64_t stream_key) {
    if (client.shard.size() == 0) throw EmptyShard("client shard is empty");
    if (steps < 1 || batch < 1) throw InvalidParams("steps and batch must be >= 1");
    if (!(eta > 0.0)) throw InvalidParams("learning rate must be positive");

    rng::Stream stream(stream_key);
    const int n = client.shard.size();
    std::vector<int> indices(batch);
    Eigen::VectorXd grad(param_dim(spec));
    GradEnvelope env;
    env.lower = Eigen::VectorXd::Constant(param_dim(spec),
                                          std::numeric_limits<double>::infinity());
    env.upper = -env.lower;
    for (int step = 0; step < steps; ++step) {
        for (int j = 0; j < batch; ++j)
            indices[j] = static_cast<int>(stream.next_index(n));
        minibatch_gradient(spec, client.params, client.shard, indices, grad);
        client.params -= eta * grad;
        env.lower = env.lower.cwiseMin(grad);
        env.upper = env.upper.cwiseMax(grad);
    }
    // Envelope of the I-step sum inferred from the per-step extremes.
    env.lower *= static_cast<double>(steps);
    env.upper *= static_cast<double>(steps);
    return env;
}

Eigen::VectorXd local_update_delta(const ClientState& client) {
    return client.params - client.last_sync;
}

EvalResult evaluate(const ModelSpec& spec, const Eigen::VectorXd& params,
                    const Dataset& test_set) {
    if (test_set.size() == 0) throw InvalidParams("empty test set");
    EvalResult result;
    Eigen::VectorXd probs;
    int correct = 0;
    double loss = 0.0;
    for (int i = 0; i < test_set.size(); ++i) {
        const Eigen::VectorXd z = sample_logits(spec, params, test_set.features.row(i));
        loss += softmax_xent(z, test_set.labels[i], probs);
        Eigen::Index best = 0;
        z.maxCoeff(&best);
        if (static_cast<int>(best) == test_set.labels[i]) ++correct;
    }
    result.accuracy = static_cast<double>(correct) / test_set.size();
    result.loss = loss / test_set.size();
    return result;
}

}  // namespace cogc::fl
