#pragma once

#include <string>
#include <vector>

#include "starris/graph/hetero.hpp"
#include "starris/rng.hpp"
#include "starris/system_core.hpp"

namespace starris::nn {

enum class Activation { relu, sigmoid, none };

struct DenseLayerSpec {
    int in_dim = 0, out_dim = 0;
    Activation act = Activation::none;
};

// One fully connected chain with its weights and Adam moment slots. Weights
// are in_dim x out_dim (inputs are row vectors), biases 1 x out_dim.
struct DenseNet {
    std::string name;
    std::vector<DenseLayerSpec> layers;
    std::vector<Mat> weights, biases;
    std::vector<Mat> m_w, v_w, m_b, v_b;  // Adam first/second moments

    std::size_t param_count() const;
};

// The published layer table leaves the wide-round input width (574) short of
// any derivable concatenation width. "derived" sizes every input from the
// actual concatenation; "table" (N_t=16, D=256 only) keeps the literal 574 by
// zero-padding short inputs on the right and truncating long ones.
enum class WidthMode { derived, table };

struct ModelConfig {
    int n_tx = 16;
    int feature_dim = 256;  // vertex feature width D after round 1
    int rounds = 3;
    WidthMode width_mode = WidthMode::derived;

    void validate() const;
};

// All trainable state. Net order: rounds t = 1..T each contribute
// (message-to-user, message-to-element, user-update, element-update), then
// the three shared output heads (precoder, phase, split).
struct ModelParameters {
    ModelConfig cfg;
    std::vector<DenseNet> nets;

    int msg_user_index(int round) const { return 4 * (round - 1); }
    int msg_elem_index(int round) const { return 4 * (round - 1) + 1; }
    int update_user_index(int round) const { return 4 * (round - 1) + 2; }
    int update_elem_index(int round) const { return 4 * (round - 1) + 3; }
    int head_w_index() const { return 4 * cfg.rounds; }
    int head_c_index() const { return 4 * cfg.rounds + 1; }
    int head_d_index() const { return 4 * cfg.rounds + 2; }

    std::size_t param_count() const;

    // Human-readable shape manifest; embedded in the save file and printed on
    // incompatible loads.
    std::string manifest() const;

    // Fan-in-scaled uniform init: He-style for relu layers, Xavier-style for
    // sigmoid/linear outputs. Biases zero, moments zero.
    static ModelParameters init(const ModelConfig& cfg, Rng& rng);
};

// Tape handles for every weight and bias, in net order; read gradients here
// after backward().
struct BoundParams {
    std::vector<std::vector<ad::Value>> weights, biases;
};

BoundParams bind_params(ad::Tape& t, const ModelParameters& params);

// Everything the loss and the extraction step need from one batched pass.
// Row layouts follow the graph engine: (sample, user) and (sample, element).
struct ForwardPass {
    graph::GraphDims dims;
    ad::Value w;            // (B*K) x 2*N_t, power-normalized [Re, Im] halves
    ad::Value theta;        // (B*S) x 2, radians in [0, 2*pi)
    ad::Value amp_t, amp_r; // (B*S) x 1, energy split amplitudes
    ad::Value sinr;         // (B*K) x 1, linear
    ad::Value rate_per_sample;  // B x 1, bits/s/Hz

    // Tape flops up to and including the output mapping. The sum-rate
    // evaluation that follows is quadratic in K by nature (a K x K gain
    // matrix), so scaling measurements use this inference-only figure.
    std::uint64_t model_flops = 0;
};

// Binds nothing itself: pass the handles from bind_params so the caller keeps
// access to parameter gradients. Throws DomainError on non-finite
// activations (message names the network and round) and on a pre-normalized
// precoder with Frobenius norm below 1e-12.
ForwardPass forward(ad::Tape& t, const ModelParameters& params, const BoundParams& bound,
                    const std::vector<const ChannelRealization*>& batch, Real p_max,
                    Real noise_power);

// Plain outputs for one sample of a forward pass.
struct InferenceOutput {
    BeamformingMatrix w;
    StarRisState ris;
    Real sum_rate = 0;
};

std::vector<InferenceOutput> extract_outputs(const ad::Tape& t, const ForwardPass& fp);

// Lossless round trip; the file is the text manifest, a '\0', then raw
// little-endian doubles (weights then bias per layer, nets in order).
// Optimizer moments are not persisted.
void save_params(const ModelParameters& params, const std::string& path);

// expected_n_tx >= 0 makes an antenna-count mismatch a refusal whose message
// contains both manifests.
ModelParameters load_params(const std::string& path, int expected_n_tx = -1);

}  // namespace starris::nn
