#pragma once

// Dense f64 tensors with reverse-mode autodiff on a define-by-run tape.
//
// Storage is a flat row-major Eigen array plus an explicit shape; rank-2
// views are mapped on demand for the linear-algebra ops. The tape is a plain
// list of backward closures replayed in reverse record order. A tape and the
// tensors recorded on it are single-threaded; independent runs use
// independent tapes (the active tape is thread-local).

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "gatera/error.hpp"
#include "gatera/rng.hpp"

namespace gatera {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Flat = Eigen::ArrayXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatView = Eigen::Map<RowMat>;
using ConstMatView = Eigen::Map<const RowMat>;

Index shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
struct TensorImpl {
    Shape shape;
    Flat value;
    Flat grad;  // size 0 until a backward pass touches this tensor
    bool requires_grad = false;
};
}  // namespace detail

class Tensor {
   public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double fill, bool requires_grad = false);
    static Tensor from_flat(Shape shape, Flat values, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::initializer_list<double> values,
                              bool requires_grad = false);
    static Tensor from_values(Shape shape, const std::vector<double>& values,
                              bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi,
                          bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    Index rank() const { return static_cast<Index>(shape().size()); }
    Index numel() const;
    Index rows() const;  // rank-2 only
    Index cols() const;  // rank-2 only

    Flat& value();
    const Flat& value() const;
    double item() const;  // numel()==1, else ContractError

    bool requires_grad() const;
    void set_requires_grad(bool v);

    bool has_grad() const;
    const Flat& grad() const;  // ContractError when no grad present
    // Adds g into the grad buffer, allocating zeros first if absent.
    // No-op when requires_grad is false: such tensors never accumulate.
    // Tensor is a shared handle, so grad mutation is const (shallow const).
    void accumulate_grad(const Flat& g) const;
    void zero_grad() const;  // drops the grad buffer

    // Identity (not value) comparison: both handles view the same storage.
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    ConstMatView matrix() const;   // rank-2 read view
    MatView grad_matrix() const;   // rank-2 view of the grad buffer (allocates zeros)

   private:
    std::shared_ptr<detail::TensorImpl> impl_;
    detail::TensorImpl& ref();
    const detail::TensorImpl& ref() const;
    detail::TensorImpl& mut() const;  // grad-side mutation through the handle
    friend class Tape;
};

// Define-by-run tape: ops append nodes during the forward pass; backward()
// replays them once, in reverse record order.
class Tape {
   public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(const Tensor& output, std::function<void()> backward_fn);

    // Seeds d(loss)/d(loss) = 1 and replays the tape. Grads of node outputs
    // (intermediates) are reset at the start of each call; leaf grads are
    // kept, so repeated calls accumulate into leaves.
    void backward(const Tensor& loss);

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

   private:
    struct Node {
        Tensor output;
        std::function<void()> backward_fn;
    };
    std::vector<Node> nodes_;
    friend class TapeGuard;
};

// RAII activation: tensors created by ops while a guard is alive are recorded
// on its tape.
class TapeGuard {
   public:
    explicit TapeGuard(Tape& tape);
    ~TapeGuard();
    TapeGuard(const TapeGuard&) = delete;
    TapeGuard& operator=(const TapeGuard&) = delete;

   private:
    Tape* previous_;
};

// Runs backward on the active tape. ContractError when no tape is active or
// the loss is not a scalar.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Ops. Each op computes its value eagerly and, when a tape is active and any
// input requires grad, records a backward closure.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise binary ops; b may broadcast against a (same rank, every b dim
// equal to a's or 1). Backward sums grad_b over the broadcast axes.
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);

Tensor scalar_mul(const Tensor& a, double c);
Tensor scalar_add(const Tensor& a, double c);

Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);  // DomainError on any value <= 0; callers clamp
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor rsqrt(const Tensor& a);  // 1/sqrt(x), DomainError on x <= 0
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor softmax_lastdim(const Tensor& a);
Tensor sum(const Tensor& a);   // -> shape {1}
Tensor mean(const Tensor& a);  // -> shape {1}

// Row selection from a rank-2 table; duplicate ids accumulate in backward.
Tensor row_gather(const Tensor& table, const std::vector<int>& ids);
Tensor slice_rows(const Tensor& a, Index start, Index count);
Tensor slice_cols(const Tensor& a, Index start, Index count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Constant copy: same values, no tape node, requires_grad=false.
Tensor detach(const Tensor& a);

// Central finite differences (f(x+eps e_i) - f(x-eps e_i)) / (2 eps) per
// coordinate. f sees fresh requires_grad=false tensors and is evaluated with
// whatever tape state the caller left active (tests call it with none), so
// the result is independent of the backward pass it is used to check.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& at, double eps);

}  // namespace gatera
