#define EIGEN_DONT_PARALLELIZE
#include "cdn/matrix.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace cdn {

namespace {

using EigenMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EigenConstMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

EigenConstMap map(const Matrix& m) {
    return EigenConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                         static_cast<Eigen::Index>(m.cols()));
}

EigenMap map(Matrix& m) {
    return EigenMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                    static_cast<Eigen::Index>(m.cols()));
}

} // namespace

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix out(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw DimError("from_rows: ragged row lengths");
        std::size_t j = 0;
        for (double v : row) out(i, j++) = v;
        ++i;
    }
    return out;
}

std::string Matrix::shape_str() const {
    std::ostringstream os;
    os << rows_ << "x" << cols_;
    return os.str();
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimError("matmul: inner dimensions differ, " + a.shape_str() + " * " +
                       b.shape_str());
    Matrix out(a.rows(), b.cols());
    map(out).noalias() = map(a) * map(b);
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw DimError("matmul_tn: row counts differ, " + a.shape_str() + " vs " +
                       b.shape_str());
    Matrix out(a.cols(), b.cols());
    map(out).noalias() = map(a).transpose() * map(b);
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw DimError("matmul_nt: column counts differ, " + a.shape_str() + " vs " +
                       b.shape_str());
    Matrix out(a.rows(), b.rows());
    map(out).noalias() = map(a) * map(b).transpose();
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    map(out) = map(a).transpose();
    return out;
}

} // namespace cdn
