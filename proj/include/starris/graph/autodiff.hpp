#pragma once

#include <functional>
#include <vector>

#include "starris/common.hpp"

namespace starris::ad {

// Handle into a Tape; cheap to copy, valid until the tape is cleared.
struct Value {
    int id = -1;
};

// Reverse-mode tape over real dense matrices. Nodes are appended in
// evaluation order, so walking the tape backwards is a topological sweep.
//
// Every reduction whose addends correspond to graph vertices (row-group sums,
// middle-axis sums, row sums, full sums) accumulates its terms in ascending
// value order. The sum then depends only on the multiset of addends, which
// makes vertex-permuted forward passes bit-identical, not merely close.
class Tape {
   public:
    // Leaf holding a constant (inputs) or a trainable parameter; the only
    // difference is who reads the gradient afterwards.
    Value constant(Mat m);

    const Mat& val(Value v) const;
    const Mat& grad(Value v) const;

    std::size_t size() const { return nodes_.size(); }
    void clear() {
        nodes_.clear();
        flops_ = 0;
    }

    // Forward-pass floating point operations recorded so far (matmuls count
    // 2*m*k*n, elementwise ops count one per entry). Used to measure how
    // inference cost scales with graph size, free of timer noise.
    std::uint64_t flops() const { return flops_; }

    // Seeds d(root)/d(root) = 1 (root must be 1x1) and propagates to every
    // node.
    void backward(Value root);

    // --- arithmetic -------------------------------------------------------
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value cmul(Value a, Value b);  // elementwise product
    Value cdiv(Value a, Value b);  // elementwise quotient
    Value scale(Value a, Real c);
    Value add_const(Value a, Real c);

    // --- dense layers -----------------------------------------------------
    Value matmul(Value a, Value b);
    // Per-sample block product: a is (bn*ra) x c, b is (bn*rb) x c; output
    // row block i is a_i * b_i^T, shape (bn*ra) x rb.
    Value batched_matmul_nt(Value a, Value b, int bn);
    Value add_row_broadcast(Value a, Value row);  // row is 1 x cols(a)

    // --- nonlinearities ---------------------------------------------------
    Value relu(Value a);
    Value sigmoid(Value a);
    Value sin_(Value a);
    Value cos_(Value a);
    Value sqrt_(Value a);  // domain error on negative entries
    Value log_(Value a);   // domain error on non-positive entries

    // --- shape plumbing ---------------------------------------------------
    Value concat_cols(Value a, Value b);
    Value slice_cols(Value a, int start, int n);
    // Row i of the input appears `times` consecutive times in the output.
    Value repeat_each_row(Value a, int times);
    // Rows are grouped in consecutive blocks of `block`; each block is
    // repeated `times` consecutive times.
    Value tile_block_rows(Value a, int block, int times);
    // Broadcast a column (rows x 1) across all columns of a.
    Value cmul_col_broadcast(Value a, Value col);
    // a has n*k rows and k columns; output (n*k) x 1 picks entry (g*k + j, j).
    Value take_diag_blocks(Value a, int k);

    // --- order-invariant reductions ---------------------------------------
    // Consecutive groups of `group` rows summed into one row each.
    Value sum_group_rows(Value a, int group);
    // Rows indexed (outer, middle, inner), summed over the middle axis.
    Value sum_over_middle(Value a, int outer, int middle, int inner);
    Value row_sum(Value a);  // rows x 1
    Value sum_all(Value a);  // 1 x 1

   private:
    struct Node {
        Mat val;
        Mat grad;
        std::function<void(Tape&)> back;  // scatter this->grad into parents
    };

    Value push(Mat val, std::function<void(Tape&)> back);
    Mat& grad_ref(Value v) { return nodes_[static_cast<std::size_t>(v.id)].grad; }
    const Mat& v(Value x) const { return nodes_[static_cast<std::size_t>(x.id)].val; }

    std::vector<Node> nodes_;
    std::uint64_t flops_ = 0;
};

}  // namespace starris::ad
