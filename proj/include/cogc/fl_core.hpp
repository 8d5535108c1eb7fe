#pragma once

// Datasets, partitioning, models and the local SGD loop.
//
// Desk-scale training stack: synthetic Gaussian blobs or IDX files, iid or
// label-skew partitioning, multinomial logistic regression or a one-hidden-
// layer ReLU MLP. All stochastic choices are keyed streams, so identical
// (seed, config) pairs reproduce bit-identical models.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace cogc::fl {

struct Dataset {
    Eigen::MatrixXd features;  // one sample per row
    std::vector<int> labels;
    int classes = 0;

    int size() const { return static_cast<int>(labels.size()); }
    int dim() const { return static_cast<int>(features.cols()); }
};

enum class PartitionKind { iid, label_skew };

struct ModelSpec {
    enum class Kind { logistic, mlp };
    Kind kind = Kind::logistic;
    int classes = 10;
    int feature_dim = 32;
    int hidden = 32;  // MLP only
};

int param_dim(const ModelSpec& spec);
Eigen::VectorXd init_params(const ModelSpec& spec, std::uint64_t stream_key);

struct ClientState {
    int id = 0;
    Dataset shard;
    double weight = 0.0;           // p_m = n_m / n
    Eigen::VectorXd params;        // current local model
    Eigen::VectorXd last_sync;     // last successfully broadcast global model
};

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
};

// Coordinate-wise bounds on the accumulated gradient sum of one round,
// inferred from the observed per-iteration gradients (steps * [min, max]).
struct GradEnvelope {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
};

// Gaussian blobs: class centers uniformly on a sphere of the given radius,
// isotropic noise, labels dealt round-robin for equal class counts. Centers
// and samples come from separate keys so train and test splits drawn from
// different sample streams share the same class geometry.
Dataset make_blobs(int classes, int feature_dim, int samples, double center_radius,
                   double noise_sigma, std::uint64_t centers_key,
                   std::uint64_t samples_key);

// IDX ingestion (big-endian; magic 0x803 for images, 0x801 for labels).
// Pixels are scaled to [0, 1]; each image row-major flattened.
Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path);

struct PartitionResult {
    std::vector<Dataset> shards;
    std::vector<double> weights;  // sums to 1; equal splits give exactly 1/M
};

// iid: seeded global shuffle, equal split. label_skew(k): client m holds
// classes {(m*k + j) mod C}, class sample lists dealt in equal chunks.
PartitionResult partition_dataset(const Dataset& data, int clients, PartitionKind kind,
                                  int skew_classes, std::uint64_t seed);

// steps sequential minibatch SGD steps (sampling with replacement); mutates
// client.params and returns the gradient-sum envelope of the round.
GradEnvelope local_sgd(ClientState& client, const ModelSpec& spec, int steps, double eta,
                       int batch, std::uint64_t stream_key);

// Current model minus the last successful broadcast; spans every local step
// taken since that broadcast, including steps from failed rounds.
Eigen::VectorXd local_update_delta(const ClientState& client);

EvalResult evaluate(const ModelSpec& spec, const Eigen::VectorXd& params,
                    const Dataset& test_set);

// Mean loss and mean gradient of the model on the given sample indices.
double minibatch_gradient(const ModelSpec& spec, const Eigen::VectorXd& params,
                          const Dataset& data, const std::vector<int>& indices,
                          Eigen::VectorXd& grad_out);

}  // namespace cogc::fl
