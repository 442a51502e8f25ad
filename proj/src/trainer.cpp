#include "starris/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace starris::train {

namespace {

using ad::Tape;
using ad::Value;

std::vector<const ChannelRealization*> view(const Dataset& data, const std::vector<std::size_t>& idx,
                                            std::size_t begin, std::size_t end) {
    std::vector<const ChannelRealization*> out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) out.push_back(&data.samples[idx[i]]);
    return out;
}

struct ValStats {
    Real sum_rate = 0, mean_violation = 0, max_violation = 0;
};

ValStats evaluate_split(const Dataset& data, const nn::ModelParameters& params,
                        std::size_t begin, std::size_t end, int chunk, Real target) {
    ValStats out;
    std::size_t n_users_total = 0;
    for (std::size_t at = begin; at < end; at += static_cast<std::size_t>(chunk)) {
        const std::size_t stop = std::min(end, at + static_cast<std::size_t>(chunk));
        std::vector<const ChannelRealization*> batch;
        for (std::size_t i = at; i < stop; ++i) batch.push_back(&data.samples[i]);
        Tape t;
        nn::BoundParams bound = nn::bind_params(t, params);
        nn::ForwardPass fp =
            nn::forward(t, params, bound, batch, data.cfg.p_max, data.cfg.noise_power);
        out.sum_rate += t.val(fp.rate_per_sample).sum();
        const Mat& sinr = t.val(fp.sinr);
        for (Eigen::Index i = 0; i < sinr.rows(); ++i) {
            const Real viol = std::max(target - sinr(i, 0), 0.0);
            out.mean_violation += viol;
            out.max_violation = std::max(out.max_violation, viol);
        }
        n_users_total += static_cast<std::size_t>(sinr.rows());
    }
    const std::size_t n = end - begin;
    if (n > 0) out.sum_rate /= static_cast<Real>(n);
    if (n_users_total > 0) out.mean_violation /= static_cast<Real>(n_users_total);
    return out;
}

}  // namespace

void adam_step(Mat& param, const Mat& grad, Mat& m, Mat& v, int step,
               const AdamConfig& cfg) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const Real bc1 = 1.0 - std::pow(cfg.beta1, step);
    const Real bc2 = 1.0 - std::pow(cfg.beta2, step);
    param.array() -=
        cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
    if (cfg.weight_decay > 0.0) param *= 1.0 - cfg.lr * cfg.weight_decay;
}

void TrainConfig::validate() const {
    if (lr <= 0 || lr_decay <= 0 || lr_decay > 1 || lr_decay_every < 1)
        throw DomainError("train config: bad learning rate schedule");
    if (batch_size < 1 || max_epochs < 1 || patience < 1)
        throw DomainError("train config: batch size, epochs, patience must be positive");
    if (qos_target < 0) throw DomainError("train config: QoS target must be nonnegative");
    if (weight_decay < 0) throw DomainError("train config: weight decay must be nonnegative");
    model.validate();
}

Real lr_at_epoch(const TrainConfig& cfg, int epoch) {
    return cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
}

void TrainLog::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "epoch,lr,train_loss,val_sum_rate,mean_violation,max_violation,lambda_mean,"
           "wall_ms\n";
    for (const EpochLog& e : epochs)
        out << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_sum_rate
            << ',' << e.mean_violation << ',' << e.max_violation << ',' << e.lambda_mean
            << ',' << e.wall_ms << '\n';
    if (!out) throw IoError("write failed: " + path);
}

Value loss_sum_rate(Tape& t, const nn::ForwardPass& fp) {
    return t.scale(t.sum_all(fp.rate_per_sample),
                   -1.0 / static_cast<Real>(fp.dims.batch));
}

Value loss_qos(Tape& t, const nn::ForwardPass& fp, const Vec& lambda, Real target) {
    if (lambda.size() != fp.dims.n_users)
        throw DimensionError("loss_qos: one dual per user expected");
    const int bn = fp.dims.batch, k = fp.dims.n_users;
    Mat lam(static_cast<Eigen::Index>(bn) * k, 1);
    for (int b = 0; b < bn; ++b)
        for (int j = 0; j < k; ++j) lam(b * k + j, 0) = lambda(j);
    Value hinge = t.relu(t.add_const(t.scale(fp.sinr, -1.0), target));
    Value penalty = t.scale(t.sum_all(t.cmul(hinge, t.constant(std::move(lam)))),
                            1.0 / static_cast<Real>(bn));
    return t.add(loss_sum_rate(t, fp), penalty);
}

Vec mean_sinr_gap(const Tape& t, const nn::ForwardPass& fp, Real target) {
    const Mat& sinr = t.val(fp.sinr);
    const int bn = fp.dims.batch, k = fp.dims.n_users;
    Vec gap = Vec::Zero(k);
    for (int b = 0; b < bn; ++b)
        for (int j = 0; j < k; ++j) gap(j) += target - sinr(b * k + j, 0);
    return gap / static_cast<Real>(bn);
}

Vec mean_sinr_violation(const Tape& t, const nn::ForwardPass& fp, Real target) {
    const Mat& sinr = t.val(fp.sinr);
    const int bn = fp.dims.batch, k = fp.dims.n_users;
    Vec viol = Vec::Zero(k);
    for (int b = 0; b < bn; ++b)
        for (int j = 0; j < k; ++j)
            viol(j) += std::max(target - sinr(b * k + j, 0), 0.0);
    return viol / static_cast<Real>(bn);
}

Vec update_duals(const Vec& lambda, const Vec& mean_gap, Real dual_lr) {
    if (lambda.size() != mean_gap.size())
        throw DimensionError("update_duals: size mismatch");
    return (lambda + dual_lr * mean_gap).cwiseMax(0.0);
}

TrainResult train(const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t n_train = data.train_count();
    const std::size_t n_val = data.size() - n_train;
    if (n_train == 0 || n_val == 0)
        throw DomainError("train: need non-empty train and validation splits");

    Rng init_rng(cfg.seed);
    nn::ModelParameters params = nn::ModelParameters::init(cfg.model, init_rng);
    const int n_users = data.cfg.n_users;
    Vec lambda = Vec::Zero(n_users);

    TrainResult result;
    result.best = params;
    Real best_metric = std::numeric_limits<Real>::infinity();
    int adam_t = 0;

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        AdamConfig adam;
        adam.lr = lr_at_epoch(cfg, epoch);
        adam.weight_decay = cfg.weight_decay;

        Rng shuffle_rng = Rng::substream(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = n_train; i > 1; --i) {
            const std::size_t j =
                std::min(i - 1, static_cast<std::size_t>(shuffle_rng.uniform() *
                                                         static_cast<Real>(i)));
            std::swap(order[i - 1], order[j]);
        }

        Real epoch_loss = 0;
        Vec epoch_gap = Vec::Zero(n_users);
        std::size_t seen = 0;
        bool diverged = false;

        for (std::size_t at = 0; at < n_train && !diverged;
             at += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(n_train, at + static_cast<std::size_t>(cfg.batch_size));
            auto batch = view(data, order, at, stop);
            try {
                Tape t;
                nn::BoundParams bound = nn::bind_params(t, params);
                nn::ForwardPass fp = nn::forward(t, params, bound, batch, data.cfg.p_max,
                                                 data.cfg.noise_power);
                Value loss = cfg.qos_enabled
                                 ? loss_qos(t, fp, lambda, cfg.qos_target)
                                 : loss_sum_rate(t, fp);
                const Real loss_val = t.val(loss)(0, 0);
                if (!std::isfinite(loss_val)) {
                    diverged = true;
                    break;
                }
                t.backward(loss);

                ++adam_t;
                for (std::size_t n = 0; n < params.nets.size(); ++n) {
                    nn::DenseNet& net = params.nets[n];
                    for (std::size_t l = 0; l < net.weights.size(); ++l) {
                        adam_step(net.weights[l], t.grad(bound.weights[n][l]), net.m_w[l],
                                  net.v_w[l], adam_t, adam);
                        adam_step(net.biases[l], t.grad(bound.biases[n][l]), net.m_b[l],
                                  net.v_b[l], adam_t, adam);
                    }
                }

                const Real bsize = static_cast<Real>(batch.size());
                epoch_loss += loss_val * bsize;
                epoch_gap += mean_sinr_violation(t, fp, cfg.qos_target) * bsize;
                seen += batch.size();
            } catch (const DomainError&) {
                diverged = true;
            }
        }

        if (diverged) {
            result.aborted = true;
            break;  // best/last still hold the last good state
        }

        epoch_loss /= static_cast<Real>(seen);
        epoch_gap /= static_cast<Real>(seen);
        if (cfg.qos_enabled) lambda = update_duals(lambda, epoch_gap, cfg.dual_lr);

        ValStats val = evaluate_split(data, params, n_train, data.size(), cfg.batch_size,
                                      cfg.qos_target);

        EpochLog log;
        log.epoch = epoch;
        log.lr = adam.lr;
        log.train_loss = epoch_loss;
        log.val_sum_rate = val.sum_rate;
        log.mean_violation = val.mean_violation;
        log.max_violation = val.max_violation;
        log.lambda_mean = n_users > 0 ? lambda.mean() : 0.0;
        log.wall_ms = std::chrono::duration<Real, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        result.log.epochs.push_back(log);

        const Real metric = -val.sum_rate;
        if (metric < best_metric) {
            best_metric = metric;
            result.best = params;
            result.log.best_epoch = epoch;
        } else if (epoch - result.log.best_epoch >= cfg.patience) {
            break;
        }
    }

    result.last = params;
    result.duals = lambda;
    return result;
}

}  // namespace starris::train
