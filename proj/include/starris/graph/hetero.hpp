#pragma once

#include <vector>

#include "starris/channel.hpp"
#include "starris/graph/autodiff.hpp"

namespace starris::graph {

// Complete bipartite graph between L*M element vertices and K user vertices.
// Edge (s, k) carries the cascaded channel row split into real and imaginary
// halves; the payload width 2*N_t is independent of how many vertices exist.
struct EdgeFeatureTensor {
    Mat e;  // (S*K) x 2*N_t, row s*K + k = [Re(h_equiv[k].row(s)), Im(...)]
    int n_elems = 0, n_users = 0, n_tx = 0;

    // Reassembles the complex channel row carried by edge (s, k).
    CVec edge_channel(int s, int k) const;
};

EdgeFeatureTensor build_graph(const ChannelRealization& chan);

// Vertically stacks per-sample edge tensors so one tape pass covers a whole
// minibatch. All samples must share (S, K, N_t); rows ordered (sample,
// element, user).
Mat stack_edges(const std::vector<EdgeFeatureTensor>& batch);

struct GraphDims {
    int batch = 1;
    int n_elems = 0;  // S = L*M
    int n_users = 0;  // K
    int n_tx = 0;

    long edge_rows() const {
        return static_cast<long>(batch) * n_elems * n_users;
    }
};

// One message-passing state. Vertex features and per-round predictions are
// tape values so a loss built on top of them differentiates through every
// round. Row layouts: u is (batch*K) x D_u ordered (sample, user); b is
// (batch*S) x D_b ordered (sample, element).
struct HeteroGraphState {
    ad::Value u, b;
    ad::Value w_pred;      // (batch*K) x 2*N_t, real/imag precoder halves
    ad::Value theta_pred;  // (batch*S) x 2, phase fractions per region
    ad::Value beta_pred;   // (batch*S) x 1, transmit energy share
};

// Model side of the engine: supplies the per-round message, update, and
// output-head evaluators. The engine owns alignment, sum pooling, and the
// round schedule; the bundle owns widths, concatenation, and weights.
class OperatorBundle {
   public:
    virtual ~OperatorBundle() = default;

    // Width of the vertex features entering round `round`+1 (round 0 is the
    // initial state).
    virtual int feature_width(int round) const = 0;

    // All three arguments are row-aligned over (sample, element, user).
    virtual ad::Value message_to_user(ad::Tape& t, int round, ad::Value b_rep,
                                      ad::Value u_rep, ad::Value e) const = 0;
    virtual ad::Value message_to_elem(ad::Tape& t, int round, ad::Value u_rep,
                                      ad::Value b_rep, ad::Value e) const = 0;

    virtual ad::Value update_user(ad::Tape& t, int round, ad::Value u,
                                  ad::Value w_pred, ad::Value c) const = 0;
    virtual ad::Value update_elem(ad::Tape& t, int round, ad::Value b,
                                  ad::Value theta_pred, ad::Value beta_pred,
                                  ad::Value d) const = 0;

    virtual ad::Value head_precoder(ad::Tape& t, ad::Value u) const = 0;  // 2*N_t cols
    virtual ad::Value head_phase(ad::Tape& t, ad::Value b) const = 0;     // 2 cols
    virtual ad::Value head_split(ad::Tape& t, ad::Value b) const = 0;     // 1 col

    // All-zero features and predictions; keeps round 1 blind to vertex
    // identity so equivariance holds from the start.
    HeteroGraphState initial_state(ad::Tape& t, const GraphDims& dims) const;
};

// One aggregate-update-predict round. `round` is 1-based.
HeteroGraphState hgmp_round(ad::Tape& t, const HeteroGraphState& state, ad::Value edges,
                            const GraphDims& dims, int round, const OperatorBundle& ops);

// Runs `rounds` rounds from the bundle's initial state.
HeteroGraphState run_hgmp(ad::Tape& t, ad::Value edges, const GraphDims& dims, int rounds,
                          const OperatorBundle& ops);

}  // namespace starris::graph
