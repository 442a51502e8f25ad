#include "starris/nn/bhgnn.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace starris::nn {

namespace {

using ad::Tape;
using ad::Value;

const char* act_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        default: return "none";
    }
}

constexpr int kTableWidth = 574;
constexpr int kHeadHidden = 64;

int msg_width(const ModelConfig& cfg, int round) {
    if (round == 1) return 2 + 2 * cfg.n_tx;
    return cfg.width_mode == WidthMode::table ? kTableWidth
                                              : 2 * cfg.feature_dim + 2 * cfg.n_tx;
}

DenseNet make_net(std::string name, std::vector<DenseLayerSpec> layers) {
    DenseNet net;
    net.name = std::move(name);
    net.layers = std::move(layers);
    for (const DenseLayerSpec& l : net.layers) {
        net.weights.push_back(Mat::Zero(l.in_dim, l.out_dim));
        net.biases.push_back(Mat::Zero(1, l.out_dim));
        net.m_w.push_back(Mat::Zero(l.in_dim, l.out_dim));
        net.v_w.push_back(Mat::Zero(l.in_dim, l.out_dim));
        net.m_b.push_back(Mat::Zero(1, l.out_dim));
        net.v_b.push_back(Mat::Zero(1, l.out_dim));
    }
    return net;
}

std::vector<DenseNet> build_nets(const ModelConfig& cfg) {
    const int d = cfg.feature_dim;
    const bool table = cfg.width_mode == WidthMode::table;
    std::vector<DenseNet> nets;
    for (int r = 1; r <= cfg.rounds; ++r) {
        const int mw = msg_width(cfg, r);
        const std::string suffix = "_" + std::to_string(r);
        nets.push_back(make_net("msg_user" + suffix, {{mw, mw, Activation::relu}}));
        nets.push_back(make_net("msg_elem" + suffix, {{mw, mw, Activation::relu}}));
        // Round 1 updates see only the aggregated message (the feature and
        // prediction slots are all zero then); later rounds concatenate
        // (feature, prediction, message).
        int in_u, in_b;
        if (r == 1) {
            in_u = in_b = mw;
        } else if (table) {
            in_u = in_b = kTableWidth;
        } else {
            in_u = d + 2 * cfg.n_tx + mw;
            in_b = d + 3 + mw;
        }
        nets.push_back(make_net("update_user" + suffix, {{in_u, d, Activation::relu}}));
        nets.push_back(make_net("update_elem" + suffix, {{in_b, d, Activation::relu}}));
    }
    nets.push_back(make_net("head_precoder", {{d, d, Activation::relu},
                                              {d, 2 * cfg.n_tx, Activation::none}}));
    nets.push_back(make_net("head_phase", {{d, kHeadHidden, Activation::relu},
                                           {kHeadHidden, 2, Activation::sigmoid}}));
    nets.push_back(make_net("head_split", {{d, kHeadHidden, Activation::relu},
                                           {kHeadHidden, 1, Activation::sigmoid}}));
    return nets;
}

// Pads with zero columns on the right or truncates on the right; only the
// table width mode ever needs it.
Value fit_width(Tape& t, Value v, int target) {
    const int cols = static_cast<int>(t.val(v).cols());
    if (cols == target) return v;
    if (cols < target)
        return t.concat_cols(v, t.constant(Mat::Zero(t.val(v).rows(), target - cols)));
    return t.slice_cols(v, 0, target);
}

Value apply_net(Tape& t, const DenseNet& net, const std::vector<Value>& w,
                const std::vector<Value>& b, Value in, int round) {
    Value x = fit_width(t, in, net.layers.front().in_dim);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        x = t.add_row_broadcast(t.matmul(x, w[l]), b[l]);
        switch (net.layers[l].act) {
            case Activation::relu: x = t.relu(x); break;
            case Activation::sigmoid: x = t.sigmoid(x); break;
            case Activation::none: break;
        }
    }
    if (!t.val(x).allFinite())
        throw DomainError("non-finite activation in " + net.name +
                          (round > 0 ? " (round " + std::to_string(round) + ")" : ""));
    return x;
}

class BhgnnBundle : public graph::OperatorBundle {
   public:
    BhgnnBundle(const ModelParameters& p, const BoundParams& bound)
        : p_(p), bound_(bound) {}

    int feature_width(int round) const override {
        return round == 0 ? 2 : p_.cfg.feature_dim;
    }

    Value message_to_user(Tape& t, int round, Value b_rep, Value u_rep,
                          Value e) const override {
        Value in = round == 1 ? t.concat_cols(b_rep, e)
                              : t.concat_cols(t.concat_cols(b_rep, u_rep), e);
        return run(t, p_.msg_user_index(round), in, round);
    }

    Value message_to_elem(Tape& t, int round, Value u_rep, Value b_rep,
                          Value e) const override {
        Value in = round == 1 ? t.concat_cols(u_rep, e)
                              : t.concat_cols(t.concat_cols(u_rep, b_rep), e);
        return run(t, p_.msg_elem_index(round), in, round);
    }

    Value update_user(Tape& t, int round, Value u, Value w_pred, Value c) const override {
        Value in = round == 1 ? c : t.concat_cols(t.concat_cols(u, w_pred), c);
        return run(t, p_.update_user_index(round), in, round);
    }

    Value update_elem(Tape& t, int round, Value b, Value theta_pred, Value beta_pred,
                      Value d) const override {
        Value in = round == 1
                       ? d
                       : t.concat_cols(
                             t.concat_cols(t.concat_cols(b, theta_pred), beta_pred), d);
        return run(t, p_.update_elem_index(round), in, round);
    }

    Value head_precoder(Tape& t, Value u) const override {
        return run(t, p_.head_w_index(), u, 0);
    }
    Value head_phase(Tape& t, Value b) const override {
        return run(t, p_.head_c_index(), b, 0);
    }
    Value head_split(Tape& t, Value b) const override {
        return run(t, p_.head_d_index(), b, 0);
    }

   private:
    Value run(Tape& t, int net, Value in, int round) const {
        const std::size_t n = static_cast<std::size_t>(net);
        return apply_net(t, p_.nets[n], bound_.weights[n], bound_.biases[n], in, round);
    }

    const ModelParameters& p_;
    const BoundParams& bound_;
};

void write_doubles(std::ostream& out, const Mat& m) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

void read_doubles(std::istream& in, Mat& m) {
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    if (!in) throw IoError("parameter file truncated");
}

}  // namespace

std::size_t DenseNet::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
}

void ModelConfig::validate() const {
    if (n_tx < 1 || feature_dim < 1 || rounds < 1)
        throw DomainError("model config: dimensions must be positive");
    if (width_mode == WidthMode::table && (n_tx != 16 || feature_dim != 256))
        throw DomainError(
            "model config: the literal layer table is only defined for n_tx=16, "
            "feature_dim=256");
}

std::size_t ModelParameters::param_count() const {
    std::size_t n = 0;
    for (const DenseNet& net : nets) n += net.param_count();
    return n;
}

std::string ModelParameters::manifest() const {
    std::ostringstream out;
    out << "bhgnn-params v1\n";
    out << "n_tx " << cfg.n_tx << "\n";
    out << "feature_dim " << cfg.feature_dim << "\n";
    out << "rounds " << cfg.rounds << "\n";
    out << "width_mode " << (cfg.width_mode == WidthMode::table ? "table" : "derived")
        << "\n";
    for (const DenseNet& net : nets) {
        out << "net " << net.name;
        for (const DenseLayerSpec& l : net.layers)
            out << " " << l.in_dim << ":" << l.out_dim << ":" << act_name(l.act);
        out << "\n";
    }
    return out.str();
}

ModelParameters ModelParameters::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParameters p;
    p.cfg = cfg;
    p.nets = build_nets(cfg);
    for (DenseNet& net : p.nets)
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            const DenseLayerSpec& spec = net.layers[l];
            const Real lim = spec.act == Activation::relu
                                 ? std::sqrt(6.0 / spec.in_dim)
                                 : std::sqrt(6.0 / (spec.in_dim + spec.out_dim));
            for (int i = 0; i < spec.in_dim; ++i)
                for (int j = 0; j < spec.out_dim; ++j)
                    net.weights[l](i, j) = rng.uniform(-lim, lim);
            // Small positive bias keeps relu units alive at the start and
            // keeps linear outputs nonzero even on a fully dead path, which
            // would otherwise emit an exactly zero precoder and trip the
            // normalization guard.
            if (spec.act != Activation::sigmoid) net.biases[l].setConstant(0.01);
        }
    return p;
}

BoundParams bind_params(ad::Tape& t, const ModelParameters& params) {
    BoundParams out;
    for (const DenseNet& net : params.nets) {
        std::vector<Value> w, b;
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            w.push_back(t.constant(net.weights[l]));
            b.push_back(t.constant(net.biases[l]));
        }
        out.weights.push_back(std::move(w));
        out.biases.push_back(std::move(b));
    }
    return out;
}

ForwardPass forward(ad::Tape& t, const ModelParameters& params, const BoundParams& bound,
                    const std::vector<const ChannelRealization*>& batch, Real p_max,
                    Real noise_power) {
    if (batch.empty()) throw DomainError("forward: empty batch");
    if (noise_power <= 0 || p_max <= 0)
        throw DomainError("forward: p_max and noise power must be positive");
    const ChannelRealization& first = *batch.front();
    if (first.n_tx != params.cfg.n_tx)
        throw DimensionError("forward: channel antenna count does not match the model");

    graph::GraphDims dims;
    dims.batch = static_cast<int>(batch.size());
    dims.n_elems = first.total_elems();
    dims.n_users = first.n_users;
    dims.n_tx = first.n_tx;
    const int n_users_t = first.n_users_t;

    // Stack edge features, normalized so the effective noise power is one.
    // The same convention at training and inference time is what lets one
    // model run on graphs it never saw.
    std::vector<graph::EdgeFeatureTensor> tensors;
    tensors.reserve(batch.size());
    for (const ChannelRealization* chan : batch) {
        if (chan->n_tx != first.n_tx || chan->total_elems() != dims.n_elems ||
            chan->n_users != dims.n_users || chan->n_users_t != n_users_t)
            throw DimensionError("forward: mixed channel shapes in one batch");
        tensors.push_back(graph::build_graph(*chan));
    }
    Mat edge_mat = graph::stack_edges(tensors) / std::sqrt(noise_power);
    Value edges = t.constant(std::move(edge_mat));

    BhgnnBundle ops(params, bound);
    graph::HeteroGraphState state = graph::run_hgmp(t, edges, dims, params.cfg.rounds, ops);

    const int nt = dims.n_tx, k = dims.n_users, s = dims.n_elems, bn = dims.batch;

    // Power normalization to an exact Frobenius budget per sample.
    Value sq_rows = t.row_sum(t.cmul(state.w_pred, state.w_pred));
    Value norm_sq = t.sum_group_rows(sq_rows, k);
    if (t.val(norm_sq).minCoeff() < 1e-24)
        throw DomainError("forward: pre-normalization precoder norm below 1e-12");
    Value factor = t.cdiv(t.constant(Mat::Constant(bn, 1, std::sqrt(p_max))),
                          t.sqrt_(norm_sq));
    Value w = t.cmul_col_broadcast(state.w_pred, t.repeat_each_row(factor, k));

    // Phase fractions to radians; energy split to amplitudes.
    Value theta = t.scale(state.theta_pred, 2.0 * kPi);
    Value amp_t = t.sqrt_(state.beta_pred);
    Value amp_r = t.sqrt_(t.add_const(t.scale(state.beta_pred, -1.0), 1.0));

    const std::uint64_t model_flops = t.flops();

    // Per-edge complex products h~_sk . w_j for all j at once.
    Value er = t.slice_cols(edges, 0, nt);
    Value ei = t.slice_cols(edges, nt, nt);
    Value wr = t.slice_cols(w, 0, nt);
    Value wi = t.slice_cols(w, nt, nt);
    Value ar = t.sub(t.batched_matmul_nt(er, wr, bn), t.batched_matmul_nt(ei, wi, bn));
    Value ai = t.add(t.batched_matmul_nt(er, wi, bn), t.batched_matmul_nt(ei, wr, bn));

    // Region coefficient per (sample, element, user) row: the T column for
    // the first K_0 users, the R column otherwise.
    Value cos_t = t.cmul(amp_t, t.cos_(t.slice_cols(theta, 0, 1)));
    Value sin_t = t.cmul(amp_t, t.sin_(t.slice_cols(theta, 0, 1)));
    Value cos_r = t.cmul(amp_r, t.cos_(t.slice_cols(theta, 1, 1)));
    Value sin_r = t.cmul(amp_r, t.sin_(t.slice_cols(theta, 1, 1)));
    Mat mask_t_m(static_cast<Eigen::Index>(bn) * s * k, 1);
    for (int i = 0; i < bn * s; ++i)
        for (int j = 0; j < k; ++j) mask_t_m(i * k + j, 0) = j < n_users_t ? 1.0 : 0.0;
    Value mask_t = t.constant(mask_t_m);
    Value mask_r = t.add_const(t.scale(mask_t, -1.0), 1.0);
    Value phi_c = t.add(t.cmul(t.repeat_each_row(cos_t, k), mask_t),
                        t.cmul(t.repeat_each_row(cos_r, k), mask_r));
    Value phi_s = t.add(t.cmul(t.repeat_each_row(sin_t, k), mask_t),
                        t.cmul(t.repeat_each_row(sin_r, k), mask_r));

    Value c_re = t.sub(t.cmul_col_broadcast(ar, phi_c), t.cmul_col_broadcast(ai, phi_s));
    Value c_im = t.add(t.cmul_col_broadcast(ai, phi_c), t.cmul_col_broadcast(ar, phi_s));

    // Cascaded gains, then powers, then the SINR with unit noise.
    Value g_re = t.sum_over_middle(c_re, bn, s, k);
    Value g_im = t.sum_over_middle(c_im, bn, s, k);
    Value p = t.add(t.cmul(g_re, g_re), t.cmul(g_im, g_im));
    Value sig = t.take_diag_blocks(p, k);
    Value interf = t.sub(t.row_sum(p), sig);
    Value sinr = t.cdiv(sig, t.add_const(interf, 1.0));
    Value rate = t.scale(t.log_(t.add_const(sinr, 1.0)), 1.0 / std::log(2.0));

    ForwardPass fp;
    fp.dims = dims;
    fp.w = w;
    fp.theta = theta;
    fp.amp_t = amp_t;
    fp.amp_r = amp_r;
    fp.sinr = sinr;
    fp.rate_per_sample = t.sum_group_rows(rate, k);
    fp.model_flops = model_flops;
    return fp;
}

std::vector<InferenceOutput> extract_outputs(const ad::Tape& t, const ForwardPass& fp) {
    const int bn = fp.dims.batch, k = fp.dims.n_users, s = fp.dims.n_elems,
              nt = fp.dims.n_tx;
    const Mat& w = t.val(fp.w);
    const Mat& theta = t.val(fp.theta);
    const Mat& at = t.val(fp.amp_t);
    const Mat& ar = t.val(fp.amp_r);
    const Mat& rate = t.val(fp.rate_per_sample);

    std::vector<InferenceOutput> out(static_cast<std::size_t>(bn));
    for (int b = 0; b < bn; ++b) {
        InferenceOutput& o = out[static_cast<std::size_t>(b)];
        o.w.w.resize(nt, k);
        for (int j = 0; j < k; ++j)
            for (int i = 0; i < nt; ++i)
                o.w.w(i, j) = Complex(w(b * k + j, i), w(b * k + j, nt + i));
        o.ris.theta_t.resize(s);
        o.ris.theta_r.resize(s);
        o.ris.amp_t.resize(s);
        o.ris.amp_r.resize(s);
        for (int e = 0; e < s; ++e) {
            o.ris.theta_t(e) = theta(b * s + e, 0);
            o.ris.theta_r(e) = theta(b * s + e, 1);
            o.ris.amp_t(e) = at(b * s + e, 0);
            o.ris.amp_r(e) = ar(b * s + e, 0);
        }
        o.sum_rate = rate(b, 0);
    }
    return out;
}

void save_params(const ModelParameters& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    const std::string manifest = params.manifest();
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    out.put('\0');
    for (const DenseNet& net : params.nets)
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            write_doubles(out, net.weights[l]);
            write_doubles(out, net.biases[l]);
        }
    if (!out) throw IoError("write failed: " + path);
}

ModelParameters load_params(const std::string& path, int expected_n_tx) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string manifest;
    std::getline(in, manifest, '\0');
    if (!in) throw IoError("parameter file has no manifest terminator: " + path);

    std::istringstream ms(manifest);
    std::string line;
    std::getline(ms, line);
    if (line != "bhgnn-params v1") throw IoError("not a parameter file: " + path);

    ModelConfig cfg;
    std::string key;
    std::string mode;
    ms >> key >> cfg.n_tx;
    if (key != "n_tx") throw IoError("malformed manifest in " + path);
    ms >> key >> cfg.feature_dim;
    ms >> key >> cfg.rounds;
    ms >> key >> mode;
    cfg.width_mode = mode == "table" ? WidthMode::table : WidthMode::derived;

    ModelParameters params;
    params.cfg = cfg;
    params.nets = build_nets(cfg);
    if (params.manifest() != manifest)
        throw IoError("manifest does not match the architecture it declares: " + path);

    if (expected_n_tx >= 0 && expected_n_tx != cfg.n_tx) {
        ModelConfig want = cfg;
        want.n_tx = expected_n_tx;
        ModelParameters expect;
        expect.cfg = want;
        expect.nets = build_nets(want);
        throw IoError("model/config mismatch; file manifest:\n" + params.manifest() +
                      "expected manifest:\n" + expect.manifest());
    }

    for (DenseNet& net : params.nets)
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            read_doubles(in, net.weights[l]);
            read_doubles(in, net.biases[l]);
        }
    return params;
}

}  // namespace starris::nn
