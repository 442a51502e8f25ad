#include "starris/graph/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace starris::ad {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) +
                             "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                             "x" + std::to_string(b.cols()) + ")");
}

}  // namespace

Value Tape::push(Mat val, std::function<void(Tape&)> back) {
    flops_ += static_cast<std::uint64_t>(val.size());
    Node node;
    node.val = std::move(val);
    node.grad = Mat::Zero(node.val.rows(), node.val.cols());
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Tape::constant(Mat m) { return push(std::move(m), nullptr); }

const Mat& Tape::val(Value v) const { return nodes_.at(static_cast<std::size_t>(v.id)).val; }
const Mat& Tape::grad(Value v) const { return nodes_.at(static_cast<std::size_t>(v.id)).grad; }

void Tape::backward(Value root) {
    if (val(root).rows() != 1 || val(root).cols() != 1)
        throw DimensionError("backward: root must be a 1x1 scalar");
    for (Node& n : nodes_) n.grad.setZero();
    grad_ref(root)(0, 0) = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;)
        if (nodes_[i].back) nodes_[i].back(*this);
}

// --- arithmetic -------------------------------------------------------------

Value Tape::add(Value a, Value b) {
    check_same_shape(v(a), v(b), "add");
    Value out{static_cast<int>(nodes_.size())};
    return push(v(a) + v(b), [a, b, out](Tape& t) {
        t.grad_ref(a) += t.grad(out);
        t.grad_ref(b) += t.grad(out);
    });
}

Value Tape::sub(Value a, Value b) {
    check_same_shape(v(a), v(b), "sub");
    Value out{static_cast<int>(nodes_.size())};
    return push(v(a) - v(b), [a, b, out](Tape& t) {
        t.grad_ref(a) += t.grad(out);
        t.grad_ref(b) -= t.grad(out);
    });
}

Value Tape::cmul(Value a, Value b) {
    check_same_shape(v(a), v(b), "cmul");
    Value out{static_cast<int>(nodes_.size())};
    return push(v(a).cwiseProduct(v(b)), [a, b, out](Tape& t) {
        t.grad_ref(a) += t.grad(out).cwiseProduct(t.val(b));
        t.grad_ref(b) += t.grad(out).cwiseProduct(t.val(a));
    });
}

Value Tape::cdiv(Value a, Value b) {
    check_same_shape(v(a), v(b), "cdiv");
    Value out{static_cast<int>(nodes_.size())};
    return push(v(a).cwiseQuotient(v(b)), [a, b, out](Tape& t) {
        const Mat inv_b = t.val(b).cwiseInverse();
        t.grad_ref(a) += t.grad(out).cwiseProduct(inv_b);
        t.grad_ref(b) -=
            t.grad(out).cwiseProduct(t.val(a)).cwiseProduct(inv_b).cwiseProduct(inv_b);
    });
}

Value Tape::scale(Value a, Real c) {
    Value out{static_cast<int>(nodes_.size())};
    return push(c * v(a), [a, c, out](Tape& t) { t.grad_ref(a) += c * t.grad(out); });
}

Value Tape::add_const(Value a, Real c) {
    Value out{static_cast<int>(nodes_.size())};
    return push((v(a).array() + c).matrix(), [a, out](Tape& t) { t.grad_ref(a) += t.grad(out); });
}

// --- dense layers ------------------------------------------------------------

Value Tape::matmul(Value a, Value b) {
    if (v(a).cols() != v(b).rows())
        throw DimensionError("matmul: inner dimensions disagree (" +
                             std::to_string(v(a).cols()) + " vs " + std::to_string(v(b).rows()) +
                             ")");
    // Row-by-row so each output row is a function of that row's data alone;
    // a blocked GEMM would route panel and tail rows through different
    // kernels, making results depend on row position and breaking exact
    // permutation equivariance.
    Mat prod(v(a).rows(), v(b).cols());
    for (Eigen::Index i = 0; i < prod.rows(); ++i) prod.row(i) = v(a).row(i) * v(b);
    flops_ += 2ull * static_cast<std::uint64_t>(v(a).rows()) *
              static_cast<std::uint64_t>(v(a).cols()) * static_cast<std::uint64_t>(v(b).cols());
    Value out{static_cast<int>(nodes_.size())};
    return push(std::move(prod), [a, b, out](Tape& t) {
        t.grad_ref(a) += t.grad(out) * t.val(b).transpose();
        t.grad_ref(b) += t.val(a).transpose() * t.grad(out);
    });
}

Value Tape::batched_matmul_nt(Value a, Value b, int bn) {
    const Mat& ma = v(a);
    const Mat& mb = v(b);
    if (bn < 1 || ma.rows() % bn != 0 || mb.rows() % bn != 0)
        throw DimensionError("batched_matmul_nt: rows not divisible by batch");
    if (ma.cols() != mb.cols())
        throw DimensionError("batched_matmul_nt: column dimensions disagree");
    const int ra = static_cast<int>(ma.rows()) / bn;
    const int rb = static_cast<int>(mb.rows()) / bn;
    Mat out_m(ma.rows(), rb);
    for (int i = 0; i < bn; ++i)
        out_m.middleRows(i * ra, ra) =
            ma.middleRows(i * ra, ra) * mb.middleRows(i * rb, rb).transpose();
    flops_ += 2ull * static_cast<std::uint64_t>(ma.rows()) *
              static_cast<std::uint64_t>(ma.cols()) * static_cast<std::uint64_t>(rb);
    Value out{static_cast<int>(nodes_.size())};
    return push(std::move(out_m), [a, b, bn, ra, rb, out](Tape& t) {
        const Mat& g = t.grad(out);
        for (int i = 0; i < bn; ++i) {
            t.grad_ref(a).middleRows(i * ra, ra) +=
                g.middleRows(i * ra, ra) * t.val(b).middleRows(i * rb, rb);
            t.grad_ref(b).middleRows(i * rb, rb) +=
                g.middleRows(i * ra, ra).transpose() * t.val(a).middleRows(i * ra, ra);
        }
    });
}

Value Tape::add_row_broadcast(Value a, Value row) {
    if (v(row).rows() != 1 || v(row).cols() != v(a).cols())
        throw DimensionError("add_row_broadcast: bias must be 1 x cols");
    Value out{static_cast<int>(nodes_.size())};
    return push(v(a).rowwise() + v(row).row(0), [a, row, out](Tape& t) {
        t.grad_ref(a) += t.grad(out);
        t.grad_ref(row).row(0) += t.grad(out).colwise().sum();
    });
}

// --- nonlinearities ----------------------------------------------------------

Value Tape::relu(Value a) {
    Value out{static_cast<int>(nodes_.size())};
    return push(v(a).cwiseMax(0.0), [a, out](Tape& t) {
        t.grad_ref(a) +=
            t.grad(out).cwiseProduct((t.val(a).array() > 0.0).cast<Real>().matrix());
    });
}

Value Tape::sigmoid(Value a) {
    Mat s = (1.0 / (1.0 + (-v(a).array()).exp())).matrix();
    Value out{static_cast<int>(nodes_.size())};
    return push(std::move(s), [a, out](Tape& t) {
        const auto& s_v = t.val(out).array();
        t.grad_ref(a) += (t.grad(out).array() * s_v * (1.0 - s_v)).matrix();
    });
}

Value Tape::sin_(Value a) {
    Value out{static_cast<int>(nodes_.size())};
    return push(v(a).array().sin().matrix(), [a, out](Tape& t) {
        t.grad_ref(a) += (t.grad(out).array() * t.val(a).array().cos()).matrix();
    });
}

Value Tape::cos_(Value a) {
    Value out{static_cast<int>(nodes_.size())};
    return push(v(a).array().cos().matrix(), [a, out](Tape& t) {
        t.grad_ref(a) -= (t.grad(out).array() * t.val(a).array().sin()).matrix();
    });
}

Value Tape::sqrt_(Value a) {
    if ((v(a).array() < 0.0).any()) throw DomainError("sqrt_: negative entry");
    Value out{static_cast<int>(nodes_.size())};
    return push(v(a).array().sqrt().matrix(), [a, out](Tape& t) {
        t.grad_ref(a) +=
            (t.grad(out).array() * 0.5 / t.val(out).array().max(1e-300)).matrix();
    });
}

Value Tape::log_(Value a) {
    if ((v(a).array() <= 0.0).any()) throw DomainError("log_: non-positive entry");
    Value out{static_cast<int>(nodes_.size())};
    return push(v(a).array().log().matrix(), [a, out](Tape& t) {
        t.grad_ref(a) += (t.grad(out).array() / t.val(a).array()).matrix();
    });
}

// --- shape plumbing ----------------------------------------------------------

Value Tape::concat_cols(Value a, Value b) {
    if (v(a).rows() != v(b).rows()) throw DimensionError("concat_cols: row counts disagree");
    const int ca = static_cast<int>(v(a).cols()), cb = static_cast<int>(v(b).cols());
    Mat m(v(a).rows(), ca + cb);
    m.leftCols(ca) = v(a);
    m.rightCols(cb) = v(b);
    Value out{static_cast<int>(nodes_.size())};
    return push(std::move(m), [a, b, ca, cb, out](Tape& t) {
        t.grad_ref(a) += t.grad(out).leftCols(ca);
        t.grad_ref(b) += t.grad(out).rightCols(cb);
    });
}

Value Tape::slice_cols(Value a, int start, int n) {
    if (start < 0 || n < 0 || start + n > v(a).cols())
        throw DimensionError("slice_cols: range out of bounds");
    Value out{static_cast<int>(nodes_.size())};
    return push(v(a).middleCols(start, n), [a, start, n, out](Tape& t) {
        t.grad_ref(a).middleCols(start, n) += t.grad(out);
    });
}

Value Tape::repeat_each_row(Value a, int times) {
    if (times < 1) throw DimensionError("repeat_each_row: times must be >= 1");
    const int rows = static_cast<int>(v(a).rows());
    Mat m(static_cast<Eigen::Index>(rows) * times, v(a).cols());
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < times; ++j) m.row(r * times + j) = v(a).row(r);
    Value out{static_cast<int>(nodes_.size())};
    return push(std::move(m), [a, times, rows, out](Tape& t) {
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < times; ++j)
                t.grad_ref(a).row(r) += t.grad(out).row(r * times + j);
    });
}

Value Tape::tile_block_rows(Value a, int block, int times) {
    const int rows = static_cast<int>(v(a).rows());
    if (block < 1 || times < 1 || rows % block != 0)
        throw DimensionError("tile_block_rows: rows not divisible by block");
    const int groups = rows / block;
    Mat m(static_cast<Eigen::Index>(rows) * times, v(a).cols());
    for (int g = 0; g < groups; ++g)
        for (int j = 0; j < times; ++j)
            m.middleRows((g * times + j) * block, block) = v(a).middleRows(g * block, block);
    Value out{static_cast<int>(nodes_.size())};
    return push(std::move(m), [a, block, times, groups, out](Tape& t) {
        for (int g = 0; g < groups; ++g)
            for (int j = 0; j < times; ++j)
                t.grad_ref(a).middleRows(g * block, block) +=
                    t.grad(out).middleRows((g * times + j) * block, block);
    });
}

Value Tape::cmul_col_broadcast(Value a, Value col) {
    if (v(col).cols() != 1 || v(col).rows() != v(a).rows())
        throw DimensionError("cmul_col_broadcast: column must be rows x 1");
    Value out{static_cast<int>(nodes_.size())};
    return push((v(a).array().colwise() * v(col).col(0).array()).matrix(),
                [a, col, out](Tape& t) {
        t.grad_ref(a) += (t.grad(out).array().colwise() * t.val(col).col(0).array()).matrix();
        t.grad_ref(col).col(0) +=
            t.grad(out).cwiseProduct(t.val(a)).rowwise().sum();
    });
}

Value Tape::take_diag_blocks(Value a, int k) {
    const int rows = static_cast<int>(v(a).rows());
    if (k < 1 || rows % k != 0 || v(a).cols() != k)
        throw DimensionError("take_diag_blocks: need (n*k) x k input");
    const int groups = rows / k;
    Mat m(rows, 1);
    for (int g = 0; g < groups; ++g)
        for (int j = 0; j < k; ++j) m(g * k + j, 0) = v(a)(g * k + j, j);
    Value out{static_cast<int>(nodes_.size())};
    return push(std::move(m), [a, k, groups, out](Tape& t) {
        for (int g = 0; g < groups; ++g)
            for (int j = 0; j < k; ++j) t.grad_ref(a)(g * k + j, j) += t.grad(out)(g * k + j, 0);
    });
}

// --- order-invariant reductions -----------------------------------------------

Value Tape::sum_group_rows(Value a, int group) {
    const int rows = static_cast<int>(v(a).rows());
    if (group < 1 || rows % group != 0)
        throw DimensionError("sum_group_rows: rows not divisible by group");
    const int out_rows = rows / group;
    const int cols = static_cast<int>(v(a).cols());
    Mat m(out_rows, cols);
    std::vector<Real> buf(static_cast<std::size_t>(group));
    for (int r = 0; r < out_rows; ++r)
        for (int c = 0; c < cols; ++c) {
            for (int j = 0; j < group; ++j) buf[static_cast<std::size_t>(j)] = v(a)(r * group + j, c);
            m(r, c) = sorted_sum(buf);
        }
    Value out{static_cast<int>(nodes_.size())};
    return push(std::move(m), [a, group, out_rows, out](Tape& t) {
        for (int r = 0; r < out_rows; ++r)
            for (int j = 0; j < group; ++j)
                t.grad_ref(a).row(r * group + j) += t.grad(out).row(r);
    });
}

Value Tape::sum_over_middle(Value a, int outer, int middle, int inner) {
    const int rows = static_cast<int>(v(a).rows());
    if (outer < 1 || middle < 1 || inner < 1 || rows != outer * middle * inner)
        throw DimensionError("sum_over_middle: row count does not factor as outer*middle*inner");
    const int cols = static_cast<int>(v(a).cols());
    Mat m(static_cast<Eigen::Index>(outer) * inner, cols);
    std::vector<Real> buf(static_cast<std::size_t>(middle));
    for (int o = 0; o < outer; ++o)
        for (int i = 0; i < inner; ++i)
            for (int c = 0; c < cols; ++c) {
                for (int mi = 0; mi < middle; ++mi)
                    buf[static_cast<std::size_t>(mi)] = v(a)((o * middle + mi) * inner + i, c);
                m(o * inner + i, c) = sorted_sum(buf);
            }
    Value out{static_cast<int>(nodes_.size())};
    return push(std::move(m), [a, outer, middle, inner, out](Tape& t) {
        for (int o = 0; o < outer; ++o)
            for (int mi = 0; mi < middle; ++mi)
                for (int i = 0; i < inner; ++i)
                    t.grad_ref(a).row((o * middle + mi) * inner + i) +=
                        t.grad(out).row(o * inner + i);
    });
}

Value Tape::row_sum(Value a) {
    const int rows = static_cast<int>(v(a).rows());
    const int cols = static_cast<int>(v(a).cols());
    Mat m(rows, 1);
    std::vector<Real> buf(static_cast<std::size_t>(cols));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) buf[static_cast<std::size_t>(c)] = v(a)(r, c);
        m(r, 0) = sorted_sum(buf);
    }
    Value out{static_cast<int>(nodes_.size())};
    return push(std::move(m), [a, out](Tape& t) {
        t.grad_ref(a).colwise() += t.grad(out).col(0);
    });
}

Value Tape::sum_all(Value a) {
    const std::size_t n = static_cast<std::size_t>(v(a).size());
    std::vector<Real> buf(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = v(a)(static_cast<Eigen::Index>(i));
    Mat m(1, 1);
    m(0, 0) = sorted_sum(buf);
    Value out{static_cast<int>(nodes_.size())};
    return push(std::move(m), [a, out](Tape& t) {
        t.grad_ref(a).array() += t.grad(out)(0, 0);
    });
}

}  // namespace starris::ad
