#pragma once

#include <string>
#include <vector>

#include "starris/dataset.hpp"
#include "starris/nn/bhgnn.hpp"

namespace starris::train {

struct AdamConfig {
    Real lr = 1e-3;
    Real beta1 = 0.9, beta2 = 0.999;
    Real eps = 1e-8;
    // Decoupled decay applied directly to the parameter, outside the moment
    // estimates. Keeps the sigmoid heads away from hard saturation, which is
    // what lets a trained model survive graph sizes it never saw.
    Real weight_decay = 0.0;
};

// One bias-corrected Adam update. `step` is 1-based and shared across all
// parameters of a training run.
void adam_step(Mat& param, const Mat& grad, Mat& m, Mat& v, int step,
               const AdamConfig& cfg);

struct TrainConfig {
    Real lr = 1e-3;
    Real lr_decay = 0.95;
    int lr_decay_every = 10;  // epochs per decay step
    int batch_size = 64;
    int max_epochs = 100;
    int patience = 5;  // early-stop epochs past the best validation epoch

    bool qos_enabled = false;
    Real qos_target = db_to_linear(1.0);  // minimum linear SINR per user
    Real dual_lr = 0.1;

    Real weight_decay = 0.0;  // decoupled, see AdamConfig

    std::uint64_t seed = 1;
    nn::ModelConfig model;

    void validate() const;
};

Real lr_at_epoch(const TrainConfig& cfg, int epoch);

struct EpochLog {
    int epoch = 0;
    Real lr = 0;
    Real train_loss = 0;      // epoch mean of the optimized loss
    Real val_sum_rate = 0;    // mean over the validation split, QoS excluded
    Real mean_violation = 0;  // mean over validation users of max(target - sinr, 0)
    Real max_violation = 0;
    Real lambda_mean = 0;  // mean dual variable after the epoch's update
    Real wall_ms = 0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    int best_epoch = -1;

    void write_csv(const std::string& path) const;
};

struct TrainResult {
    nn::ModelParameters best, last;
    Vec duals;  // final lambda, one per user slot
    TrainLog log;
    bool aborted = false;  // diverged; best/last hold the last good state
};

// Negative batch-mean sum rate.
ad::Value loss_sum_rate(ad::Tape& t, const nn::ForwardPass& fp);

// loss_sum_rate plus the batch-mean Lagrangian hinge
// sum_k lambda_k * max(target - sinr_k, 0).
ad::Value loss_qos(ad::Tape& t, const nn::ForwardPass& fp, const Vec& lambda, Real target);

// Per-user batch means of the signed SINR gap (target - sinr); positive
// entries are violations.
Vec mean_sinr_gap(const ad::Tape& t, const nn::ForwardPass& fp, Real target);

// Per-user batch means of the hinge max(target - sinr, 0); the subgradient
// of loss_qos in lambda, and what drives the dual updates during training.
Vec mean_sinr_violation(const ad::Tape& t, const nn::ForwardPass& fp, Real target);

// Projected subgradient step: lambda' = max(0, lambda + dual_lr * gap).
Vec update_duals(const Vec& lambda, const Vec& mean_gap, Real dual_lr);

// Unsupervised training on the dataset's train split with validation-based
// early stopping. Deterministic given (data, cfg).
TrainResult train(const Dataset& data, const TrainConfig& cfg);

}  // namespace starris::train
