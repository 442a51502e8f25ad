#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "starris/config.hpp"
#include "starris/graph/hetero.hpp"
#include "starris/rng.hpp"

using namespace starris;
using namespace starris::graph;
using ad::Tape;
using ad::Value;

namespace {

SystemConfig tiny_config(int n_tx, int n_users, int n_ris, int m) {
    SystemConfig cfg;
    cfg.n_tx = n_tx;
    cfg.n_users = n_users;
    cfg.n_ris = n_ris;
    cfg.n_elems_per_ris = m;
    cfg.n_users_t_region = (n_users + 1) / 2;
    return cfg;
}

Mat random_mat(Rng& rng, int rows, int cols) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-0.5, 0.5);
    return m;
}

// Message nets concatenate (source feature, destination feature, edge) and
// apply one random affine + relu layer; updates concatenate (feature,
// prediction, message). Weights are fixed at construction so repeated calls
// and permuted calls see identical parameters.
class AffineBundle : public OperatorBundle {
   public:
    static constexpr int kMsgWidth = 5;
    static constexpr int kFeatWidth = 6;

    AffineBundle(int n_tx, int rounds, std::uint64_t seed) : n_tx_(n_tx) {
        Rng rng(seed);
        for (int r = 1; r <= rounds; ++r) {
            const int fw = feature_width(r - 1);
            w_phi_.push_back(random_mat(rng, 2 * fw + 2 * n_tx, kMsgWidth));
            w_psi_.push_back(random_mat(rng, 2 * fw + 2 * n_tx, kMsgWidth));
            w_u_.push_back(random_mat(rng, fw + 2 * n_tx + kMsgWidth, kFeatWidth));
            w_b_.push_back(random_mat(rng, fw + 3 + kMsgWidth, kFeatWidth));
        }
        head_w_ = random_mat(rng, kFeatWidth, 2 * n_tx);
        head_c_ = random_mat(rng, kFeatWidth, 2);
        head_d_ = random_mat(rng, kFeatWidth, 1);
    }

    int feature_width(int round) const override { return round == 0 ? 2 : kFeatWidth; }

    Value message_to_user(Tape& t, int round, Value b_rep, Value u_rep,
                          Value e) const override {
        Value in = t.concat_cols(t.concat_cols(b_rep, u_rep), e);
        return t.relu(t.matmul(in, t.constant(w_phi_[static_cast<std::size_t>(round - 1)])));
    }

    Value message_to_elem(Tape& t, int round, Value u_rep, Value b_rep,
                          Value e) const override {
        Value in = t.concat_cols(t.concat_cols(u_rep, b_rep), e);
        return t.relu(t.matmul(in, t.constant(w_psi_[static_cast<std::size_t>(round - 1)])));
    }

    Value update_user(Tape& t, int round, Value u, Value w_pred, Value c) const override {
        Value in = t.concat_cols(t.concat_cols(u, w_pred), c);
        return t.relu(t.matmul(in, t.constant(w_u_[static_cast<std::size_t>(round - 1)])));
    }

    Value update_elem(Tape& t, int round, Value b, Value theta_pred, Value beta_pred,
                      Value d) const override {
        Value in = t.concat_cols(t.concat_cols(t.concat_cols(b, theta_pred), beta_pred), d);
        return t.relu(t.matmul(in, t.constant(w_b_[static_cast<std::size_t>(round - 1)])));
    }

    Value head_precoder(Tape& t, Value u) const override {
        return t.matmul(u, t.constant(head_w_));
    }
    Value head_phase(Tape& t, Value b) const override {
        return t.sigmoid(t.matmul(b, t.constant(head_c_)));
    }
    Value head_split(Tape& t, Value b) const override {
        return t.sigmoid(t.matmul(b, t.constant(head_d_)));
    }

   private:
    int n_tx_;
    std::vector<Mat> w_phi_, w_psi_, w_u_, w_b_;
    Mat head_w_, head_c_, head_d_;
};

// Zero messages, pass-through updates, zero heads: round application must be
// the identity on the initial all-zero state.
class ZeroBundle : public OperatorBundle {
   public:
    explicit ZeroBundle(int n_tx) : n_tx_(n_tx) {}
    int feature_width(int) const override { return 2; }
    Value message_to_user(Tape& t, int, Value b_rep, Value, Value) const override {
        return t.scale(t.slice_cols(b_rep, 0, 2), 0.0);
    }
    Value message_to_elem(Tape& t, int, Value u_rep, Value, Value) const override {
        return t.scale(t.slice_cols(u_rep, 0, 2), 0.0);
    }
    Value update_user(Tape&, int, Value u, Value, Value) const override { return u; }
    Value update_elem(Tape&, int, Value b, Value, Value, Value) const override { return b; }
    Value head_precoder(Tape& t, Value u) const override {
        return t.scale(t.matmul(u, t.constant(Mat::Zero(2, 2 * n_tx_))), 1.0);
    }
    Value head_phase(Tape& t, Value b) const override {
        return t.scale(t.matmul(b, t.constant(Mat::Zero(2, 2))), 1.0);
    }
    Value head_split(Tape& t, Value b) const override {
        return t.scale(t.matmul(b, t.constant(Mat::Zero(2, 1))), 1.0);
    }

   private:
    int n_tx_;
};

GraphDims dims_of(const EdgeFeatureTensor& e, int batch = 1) {
    GraphDims d;
    d.batch = batch;
    d.n_elems = e.n_elems;
    d.n_users = e.n_users;
    d.n_tx = e.n_tx;
    return d;
}

}  // namespace

TEST_CASE("edge tensor covers the complete bipartite graph and round-trips channels") {
    SystemConfig cfg = tiny_config(3, 4, 2, 2);
    ChannelRealization chan = sample_channels(cfg, 0);
    EdgeFeatureTensor e = build_graph(chan);

    CHECK(e.e.rows() == cfg.total_elems() * cfg.n_users);
    CHECK(e.e.cols() == 2 * cfg.n_tx);

    for (int s = 0; s < cfg.total_elems(); ++s)
        for (int k = 0; k < cfg.n_users; ++k) {
            CVec back = e.edge_channel(s, k);
            for (int i = 0; i < cfg.n_tx; ++i)
                CHECK(back(i) == chan.h_equiv[static_cast<std::size_t>(k)](s, i));
        }
}

TEST_CASE("permuting users permutes the edge tensor's user axis") {
    SystemConfig cfg = tiny_config(2, 3, 1, 4);
    ChannelRealization chan = sample_channels(cfg, 1);
    EdgeFeatureTensor base = build_graph(chan);

    std::vector<int> perm = {2, 0, 1};
    ChannelRealization permuted = chan;
    for (int k = 0; k < 3; ++k)
        permuted.h_equiv[static_cast<std::size_t>(k)] =
            chan.h_equiv[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
    EdgeFeatureTensor moved = build_graph(permuted);

    for (int s = 0; s < cfg.total_elems(); ++s)
        for (int k = 0; k < 3; ++k)
            CHECK(moved.e.row(s * 3 + k) ==
                  base.e.row(s * 3 + perm[static_cast<std::size_t>(k)]));
}

TEST_CASE("zero messages with pass-through updates leave the initial state fixed") {
    SystemConfig cfg = tiny_config(2, 2, 1, 3);
    ChannelRealization chan = sample_channels(cfg, 2);
    EdgeFeatureTensor e = build_graph(chan);
    GraphDims dims = dims_of(e);
    ZeroBundle ops(cfg.n_tx);

    Tape t;
    Value edges = t.constant(e.e);
    HeteroGraphState s0 = ops.initial_state(t, dims);
    HeteroGraphState s1 = hgmp_round(t, s0, edges, dims, 1, ops);

    CHECK(t.val(s1.u) == t.val(s0.u));
    CHECK(t.val(s1.b) == t.val(s0.b));
    CHECK(t.val(s1.w_pred).isZero(0.0));
    CHECK(t.val(s1.theta_pred).isZero(0.0));
    CHECK(t.val(s1.beta_pred).isZero(0.0));
}

TEST_CASE("single-user aggregation matches a direct loop over elements") {
    SystemConfig cfg = tiny_config(2, 1, 2, 3);
    cfg.n_users_t_region = 1;
    ChannelRealization chan = sample_channels(cfg, 3);
    EdgeFeatureTensor e = build_graph(chan);
    GraphDims dims = dims_of(e);
    AffineBundle ops(cfg.n_tx, 1, 77);

    Tape t;
    Value edges = t.constant(e.e);
    HeteroGraphState s0 = ops.initial_state(t, dims);

    // Engine path.
    Value b_rep = t.repeat_each_row(s0.b, dims.n_users);
    Value u_rep = t.tile_block_rows(s0.u, dims.n_users, dims.n_elems);
    Value msg = ops.message_to_user(t, 1, b_rep, u_rep, edges);
    Value c = t.sum_over_middle(msg, 1, dims.n_elems, dims.n_users);

    // Naive path: evaluate the same affine message per element and add.
    Mat expect = Mat::Zero(1, AffineBundle::kMsgWidth);
    for (int s = 0; s < dims.n_elems; ++s) {
        Mat in(1, 4 + 2 * cfg.n_tx);
        in.setZero();
        in.block(0, 4, 1, 2 * cfg.n_tx) = e.e.row(s);
        Tape local;
        Value one = ops.message_to_user(local, 1, local.constant(in.leftCols(2)),
                                        local.constant(in.middleCols(2, 2)),
                                        local.constant(in.rightCols(2 * cfg.n_tx)));
        expect += local.val(one);
    }
    CHECK((t.val(c) - expect).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("all-zero state aggregates to neighbor count times the zero-input message") {
    SystemConfig cfg = tiny_config(2, 3, 2, 2);
    AffineBundle ops(cfg.n_tx, 1, 5);
    GraphDims dims;
    dims.batch = 1;
    dims.n_elems = cfg.total_elems();
    dims.n_users = cfg.n_users;
    dims.n_tx = cfg.n_tx;

    Tape t;
    Value edges = t.constant(Mat::Zero(dims.edge_rows(), 2 * cfg.n_tx));
    HeteroGraphState s0 = ops.initial_state(t, dims);
    Value b_rep = t.repeat_each_row(s0.b, dims.n_users);
    Value u_rep = t.tile_block_rows(s0.u, dims.n_users, dims.n_elems);
    Value msg = ops.message_to_user(t, 1, b_rep, u_rep, edges);
    Value c = t.sum_over_middle(msg, 1, dims.n_elems, dims.n_users);

    Tape local;
    Mat zero_msg = local.val(ops.message_to_user(
        local, 1, local.constant(Mat::Zero(1, 2)), local.constant(Mat::Zero(1, 2)),
        local.constant(Mat::Zero(1, 2 * cfg.n_tx))));
    for (int k = 0; k < dims.n_users; ++k)
        CHECK((t.val(c).row(k) - dims.n_elems * zero_msg.row(0)).cwiseAbs().maxCoeff() <
              1e-13);
}

TEST_CASE("duplicated users receive bit-identical features and predictions") {
    SystemConfig cfg = tiny_config(3, 2, 1, 4);
    ChannelRealization chan = sample_channels(cfg, 4);
    chan.h_equiv[1] = chan.h_equiv[0];  // user 1 becomes a copy of user 0
    EdgeFeatureTensor e = build_graph(chan);
    GraphDims dims = dims_of(e);
    AffineBundle ops(cfg.n_tx, 3, 9);

    Tape t;
    HeteroGraphState out = run_hgmp(t, t.constant(e.e), dims, 3, ops);
    CHECK(t.val(out.u).row(0) == t.val(out.u).row(1));
    CHECK(t.val(out.w_pred).row(0) == t.val(out.w_pred).row(1));
}

TEST_CASE("three rounds equal three manual round applications") {
    SystemConfig cfg = tiny_config(2, 2, 2, 2);
    ChannelRealization chan = sample_channels(cfg, 5);
    EdgeFeatureTensor e = build_graph(chan);
    GraphDims dims = dims_of(e);
    AffineBundle ops(cfg.n_tx, 3, 123);

    Tape t;
    Value edges = t.constant(e.e);
    HeteroGraphState manual = ops.initial_state(t, dims);
    for (int r = 1; r <= 3; ++r) manual = hgmp_round(t, manual, edges, dims, r, ops);

    Tape t2;
    HeteroGraphState looped = run_hgmp(t2, t2.constant(e.e), dims, 3, ops);
    CHECK(t.val(manual.u) == t2.val(looped.u));
    CHECK(t.val(manual.b) == t2.val(looped.b));
    CHECK(t.val(manual.w_pred) == t2.val(looped.w_pred));
    CHECK(t.val(manual.theta_pred) == t2.val(looped.theta_pred));
    CHECK(t.val(manual.beta_pred) == t2.val(looped.beta_pred));
}

TEST_CASE("user and element permutations permute the outputs exactly") {
    SystemConfig cfg = tiny_config(3, 4, 2, 3);
    ChannelRealization chan = sample_channels(cfg, 6);
    EdgeFeatureTensor e = build_graph(chan);
    GraphDims dims = dims_of(e);
    AffineBundle ops(cfg.n_tx, 3, 31);

    Tape t;
    HeteroGraphState base = run_hgmp(t, t.constant(e.e), dims, 3, ops);

    Rng rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<int> pu(static_cast<std::size_t>(dims.n_users));
        std::vector<int> pe(static_cast<std::size_t>(dims.n_elems));
        for (std::size_t i = 0; i < pu.size(); ++i) pu[i] = static_cast<int>(i);
        for (std::size_t i = 0; i < pe.size(); ++i) pe[i] = static_cast<int>(i);
        for (std::size_t i = pu.size(); i > 1; --i)
            std::swap(pu[i - 1],
                      pu[static_cast<std::size_t>(rng.uniform() * static_cast<Real>(i))]);
        for (std::size_t i = pe.size(); i > 1; --i)
            std::swap(pe[i - 1],
                      pe[static_cast<std::size_t>(rng.uniform() * static_cast<Real>(i))]);

        // Row (s, k) of the permuted graph carries edge (pe[s], pu[k]).
        Mat permuted(e.e.rows(), e.e.cols());
        for (int s = 0; s < dims.n_elems; ++s)
            for (int k = 0; k < dims.n_users; ++k)
                permuted.row(s * dims.n_users + k) =
                    e.e.row(pe[static_cast<std::size_t>(s)] * dims.n_users +
                            pu[static_cast<std::size_t>(k)]);

        Tape tp;
        HeteroGraphState got = run_hgmp(tp, tp.constant(permuted), dims, 3, ops);
        for (int k = 0; k < dims.n_users; ++k) {
            CHECK(tp.val(got.u).row(k) ==
                  t.val(base.u).row(pu[static_cast<std::size_t>(k)]));
            CHECK(tp.val(got.w_pred).row(k) ==
                  t.val(base.w_pred).row(pu[static_cast<std::size_t>(k)]));
        }
        for (int s = 0; s < dims.n_elems; ++s) {
            CHECK(tp.val(got.b).row(s) ==
                  t.val(base.b).row(pe[static_cast<std::size_t>(s)]));
            CHECK(tp.val(got.theta_pred).row(s) ==
                  t.val(base.theta_pred).row(pe[static_cast<std::size_t>(s)]));
            CHECK(tp.val(got.beta_pred).row(s) ==
                  t.val(base.beta_pred).row(pe[static_cast<std::size_t>(s)]));
        }
    }
}

TEST_CASE("one bundle runs unchanged across three graph shapes") {
    AffineBundle ops(2, 3, 55);
    const int shapes[3][3] = {{2, 1, 2}, {3, 2, 2}, {6, 4, 2}};  // K, L, M
    for (const auto& sh : shapes) {
        SystemConfig cfg = tiny_config(2, sh[0], sh[1], sh[2]);
        ChannelRealization chan = sample_channels(cfg, 7);
        EdgeFeatureTensor e = build_graph(chan);
        GraphDims dims = dims_of(e);
        Tape t;
        HeteroGraphState out = run_hgmp(t, t.constant(e.e), dims, 3, ops);
        CHECK(t.val(out.u).rows() == sh[0]);
        CHECK(t.val(out.w_pred).cols() == 4);
        CHECK(t.val(out.b).rows() == sh[1] * sh[2]);
        CHECK(t.val(out.u).allFinite());
        CHECK(t.val(out.b).allFinite());
    }
}

TEST_CASE("batched run equals per-sample runs") {
    SystemConfig cfg = tiny_config(2, 3, 1, 4);
    AffineBundle ops(cfg.n_tx, 3, 13);

    std::vector<EdgeFeatureTensor> batch;
    std::vector<HeteroGraphState> singles;
    std::vector<Tape> tapes(2);
    for (int i = 0; i < 2; ++i) {
        ChannelRealization chan = sample_channels(cfg, static_cast<std::uint64_t>(10 + i));
        batch.push_back(build_graph(chan));
        GraphDims dims = dims_of(batch.back());
        singles.push_back(run_hgmp(tapes[static_cast<std::size_t>(i)],
                                   tapes[static_cast<std::size_t>(i)].constant(batch.back().e),
                                   dims, 3, ops));
    }

    GraphDims dims = dims_of(batch[0], 2);
    Tape t;
    HeteroGraphState out = run_hgmp(t, t.constant(stack_edges(batch)), dims, 3, ops);
    for (int i = 0; i < 2; ++i) {
        const auto& ti = tapes[static_cast<std::size_t>(i)];
        const auto& si = singles[static_cast<std::size_t>(i)];
        CHECK(t.val(out.u).middleRows(i * cfg.n_users, cfg.n_users) == ti.val(si.u));
        CHECK(t.val(out.b).middleRows(i * cfg.total_elems(), cfg.total_elems()) ==
              ti.val(si.b));
        CHECK(t.val(out.w_pred).middleRows(i * cfg.n_users, cfg.n_users) ==
              ti.val(si.w_pred));
    }
}

TEST_CASE("shape mismatches are rejected") {
    SystemConfig cfg = tiny_config(2, 2, 1, 2);
    ChannelRealization chan = sample_channels(cfg, 11);
    EdgeFeatureTensor e = build_graph(chan);
    GraphDims dims = dims_of(e);
    dims.n_users = 3;  // lie about the user count
    AffineBundle ops(cfg.n_tx, 1, 1);
    Tape t;
    CHECK_THROWS_AS(run_hgmp(t, t.constant(e.e), dims, 1, ops), DimensionError);
    dims.n_users = 2;
    CHECK_THROWS_AS(run_hgmp(t, t.constant(e.e), dims, 0, ops), DomainError);

    std::vector<EdgeFeatureTensor> mixed = {e, build_graph(sample_channels(
                                                   tiny_config(2, 3, 1, 2), 12))};
    CHECK_THROWS_AS(stack_edges(mixed), DimensionError);
}
