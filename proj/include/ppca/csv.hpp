#ifndef PPCA_CSV_HPP
#define PPCA_CSV_HPP

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace ppca::csv {

/// Decimal float with 12 significant digits ("%.12g"); non-finite values
/// print as inf, -inf or nan.
std::string format_number(double v);

/// Headerless numeric CSV. Throws FormatError on ragged rows, empty input or
/// non-numeric fields.
Eigen::MatrixXd read_matrix(std::istream& in);
Eigen::MatrixXd read_matrix_file(const std::string& path);

/// Rows joined with ',' and terminated by '\n'.
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m);

/// Comma-separated list of numbers, e.g. a --eps argument.
std::vector<double> parse_number_list(const std::string& text);

}  // namespace ppca::csv

#endif  // PPCA_CSV_HPP
