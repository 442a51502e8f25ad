#include "starris/graph/hetero.hpp"

#include <string>

namespace starris::graph {

CVec EdgeFeatureTensor::edge_channel(int s, int k) const {
    CVec out(n_tx);
    const auto row = e.row(s * n_users + k);
    for (int i = 0; i < n_tx; ++i) out(i) = Complex(row(i), row(n_tx + i));
    return out;
}

EdgeFeatureTensor build_graph(const ChannelRealization& chan) {
    EdgeFeatureTensor out;
    out.n_elems = chan.total_elems();
    out.n_users = chan.n_users;
    out.n_tx = chan.n_tx;
    out.e.resize(static_cast<Eigen::Index>(out.n_elems) * out.n_users, 2 * out.n_tx);
    for (int s = 0; s < out.n_elems; ++s)
        for (int k = 0; k < out.n_users; ++k) {
            const auto row = chan.h_equiv[static_cast<std::size_t>(k)].row(s);
            for (int i = 0; i < out.n_tx; ++i) {
                out.e(s * out.n_users + k, i) = row(i).real();
                out.e(s * out.n_users + k, out.n_tx + i) = row(i).imag();
            }
        }
    return out;
}

Mat stack_edges(const std::vector<EdgeFeatureTensor>& batch) {
    if (batch.empty()) throw DimensionError("stack_edges: empty batch");
    const EdgeFeatureTensor& first = batch.front();
    const Eigen::Index rows_per = first.e.rows();
    Mat out(rows_per * static_cast<Eigen::Index>(batch.size()), first.e.cols());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const EdgeFeatureTensor& t = batch[i];
        if (t.n_elems != first.n_elems || t.n_users != first.n_users || t.n_tx != first.n_tx)
            throw DimensionError("stack_edges: mixed graph shapes in one batch");
        out.middleRows(static_cast<Eigen::Index>(i) * rows_per, rows_per) = t.e;
    }
    return out;
}

HeteroGraphState OperatorBundle::initial_state(ad::Tape& t, const GraphDims& dims) const {
    const int d0 = feature_width(0);
    HeteroGraphState s;
    s.u = t.constant(Mat::Zero(static_cast<Eigen::Index>(dims.batch) * dims.n_users, d0));
    s.b = t.constant(Mat::Zero(static_cast<Eigen::Index>(dims.batch) * dims.n_elems, d0));
    s.w_pred = t.constant(
        Mat::Zero(static_cast<Eigen::Index>(dims.batch) * dims.n_users, 2 * dims.n_tx));
    s.theta_pred =
        t.constant(Mat::Zero(static_cast<Eigen::Index>(dims.batch) * dims.n_elems, 2));
    s.beta_pred =
        t.constant(Mat::Zero(static_cast<Eigen::Index>(dims.batch) * dims.n_elems, 1));
    return s;
}

HeteroGraphState hgmp_round(ad::Tape& t, const HeteroGraphState& state, ad::Value edges,
                            const GraphDims& dims, int round, const OperatorBundle& ops) {
    if (t.val(edges).rows() != dims.edge_rows() || t.val(edges).cols() != 2 * dims.n_tx)
        throw DimensionError("hgmp_round: edge tensor shape does not match dims");
    if (t.val(state.u).rows() != static_cast<long>(dims.batch) * dims.n_users ||
        t.val(state.b).rows() != static_cast<long>(dims.batch) * dims.n_elems)
        throw DimensionError("hgmp_round: vertex feature row counts do not match dims");

    // Align vertex features with the (sample, element, user) edge rows.
    ad::Value b_rep = t.repeat_each_row(state.b, dims.n_users);
    ad::Value u_rep = t.tile_block_rows(state.u, dims.n_users, dims.n_elems);

    ad::Value msg_u = ops.message_to_user(t, round, b_rep, u_rep, edges);
    ad::Value msg_b = ops.message_to_elem(t, round, u_rep, b_rep, edges);

    // Sum pooling over the neighbor axis: users aggregate over elements,
    // elements aggregate over users.
    ad::Value c = t.sum_over_middle(msg_u, dims.batch, dims.n_elems, dims.n_users);
    ad::Value d = t.sum_group_rows(msg_b, dims.n_users);

    HeteroGraphState next;
    next.u = ops.update_user(t, round, state.u, state.w_pred, c);
    next.b = ops.update_elem(t, round, state.b, state.theta_pred, state.beta_pred, d);
    next.w_pred = ops.head_precoder(t, next.u);
    next.theta_pred = ops.head_phase(t, next.b);
    next.beta_pred = ops.head_split(t, next.b);
    return next;
}

HeteroGraphState run_hgmp(ad::Tape& t, ad::Value edges, const GraphDims& dims, int rounds,
                          const OperatorBundle& ops) {
    if (rounds < 1) throw DomainError("run_hgmp: need at least one round");
    HeteroGraphState state = ops.initial_state(t, dims);
    for (int r = 1; r <= rounds; ++r) state = hgmp_round(t, state, edges, dims, r, ops);
    return state;
}

}  // namespace starris::graph
