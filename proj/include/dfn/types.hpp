#ifndef DFN_TYPES_HPP
#define DFN_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dfn {

template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = VectorX<double>;
using MatrixXd = MatrixX<double>;

// Node labels are integers 0..n. Links are addressed internally by their
// position in the topology's link list; the user-facing id is kept on Link.
using NodeId = int;
using LinkIndex = int;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a numeric procedure fails to converge; carries the best residual.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

}  // namespace dfn

#endif  // DFN_TYPES_HPP
