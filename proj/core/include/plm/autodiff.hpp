#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace plm::ad {

// One value in the computation graph. Nodes are owned by a Tape and created
// in topological order; backward closures accumulate into parent grads.
struct Node {
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;  // same shape as value once backward has run
  bool requires_grad = false;
  const char* op = "leaf";
  std::function<void(const Node&)> backward_fn;

  bool is_scalar() const { return value.rows() == 1 && value.cols() == 1; }
  double scalar() const { return value(0, 0); }
};

// Append-only arena of nodes. Append order is a topological order, so the
// backward pass is a single reverse sweep. A tape is single-threaded;
// independent tapes may run concurrently.
class Tape {
 public:
  Node* leaf(Eigen::MatrixXd value, bool requires_grad = true);
  Node* constant(Eigen::MatrixXd value) { return leaf(std::move(value), false); }
  Node* constant(double v) { return constant(Eigen::MatrixXd::Constant(1, 1, v)); }

  Node* make(const char* op, Eigen::MatrixXd value, std::initializer_list<Node*> parents,
             std::function<void(const Node&)> backward_fn);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse, accumulating
  // grads into every requires_grad node. loss must be scalar.
  void backward(Node* loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
};

Node* add(Tape& t, Node* a, Node* b);
Node* sub(Tape& t, Node* a, Node* b);
Node* elementwise_mul(Tape& t, Node* a, Node* b);
Node* scale(Tape& t, Node* a, double c);
Node* matmul(Tape& t, Node* a, Node* b);
Node* relu(Tape& t, Node* a);  // derivative 0 at exactly 0

// Rows with norm below 1e-12 pass through as zero rows (zero gradient).
Node* row_l2_normalize(Tape& t, Node* a);

// Per-row inner product of equally shaped matrices -> n x 1.
Node* rowwise_dot(Tape& t, Node* a, Node* b);

// Frobenius inner product -> 1 x 1 (vector dot as a special case).
Node* dot(Tape& t, Node* a, Node* b);

Node* hconcat(Tape& t, Node* a, Node* b);

// Stabilized log(sum(exp(row))) -> n x 1.
Node* row_log_sum_exp(Tape& t, Node* a);

Node* sum(Tape& t, Node* a);  // -> 1 x 1

// Column means over rows: n x c -> 1 x c.
Node* mean_over_rows(Tape& t, Node* a);

// Broadcast add of a 1 x c row vector to every row of an n x c matrix.
Node* add_rowvec(Tape& t, Node* m, Node* v);

// Value pass-through that blocks gradient flow.
Node* detach(Tape& t, Node* a);

// Max over parameters and elements of
//   |analytic - central difference| / max(1e-8, |analytic| + |numeric|).
// check_mask, when given, must mirror params' shapes; elements with mask 0
// are skipped (used to exclude inputs within h of a relu kink).
double gradcheck(const std::function<double(const std::vector<Eigen::MatrixXd>&)>& value_fn,
                 const std::function<std::vector<Eigen::MatrixXd>(
                     const std::vector<Eigen::MatrixXd>&)>& grad_fn,
                 std::vector<Eigen::MatrixXd> params, double h,
                 const std::vector<Eigen::MatrixXd>* check_mask = nullptr);

}  // namespace plm::ad
