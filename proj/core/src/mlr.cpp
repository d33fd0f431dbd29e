#include "hyper3d/mlr.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace hyper3d {

MlrModel fit_mlr(const MlrData& data) {
  const std::size_t k = data.rows(), n = data.features;
  if (data.x.size() != k * n) throw std::invalid_argument("fit_mlr: design size mismatch");
  if (k < n + 1) {
    throw std::invalid_argument("fit_mlr: need at least " + std::to_string(n + 1) +
                                " rows, got " + std::to_string(k));
  }
  const auto rows = static_cast<Eigen::Index>(k), cols = static_cast<Eigen::Index>(n + 1);
  Eigen::MatrixXd A(rows, cols);
  Eigen::VectorXd y(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j + 1 < cols; ++j) A(i, j) = data.x[static_cast<std::size_t>(i) * n + j];
    A(i, cols - 1) = 1.0;
    y(i) = data.y[static_cast<std::size_t>(i)];
  }

  MlrModel model;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::VectorXd beta;
  if (qr.rank() == cols) {
    beta = qr.solve(y);
  } else {
    std::cerr << "warning: MLR design has rank " << qr.rank() << " < " << cols
              << "; using ridge fallback (lambda " << kRidgeLambda << ")\n";
    Eigen::MatrixXd gram = A.transpose() * A;
    for (Eigen::Index j = 0; j + 1 < cols; ++j) gram(j, j) += kRidgeLambda;
    beta = gram.ldlt().solve(A.transpose() * y);
    model.ridge_fallback = true;
  }
  model.coefficients.assign(beta.data(), beta.data() + n);
  model.intercept = beta(cols - 1);
  for (double c : model.coefficients) {
    if (!std::isfinite(c)) throw std::runtime_error("fit_mlr: non-finite coefficient");
  }
  return model;
}

double predict_mlr_linear(const MlrModel& model, std::span<const double> features) {
  if (features.size() != model.coefficients.size()) {
    throw std::invalid_argument("predict_mlr: expected " +
                                std::to_string(model.coefficients.size()) + " features, got " +
                                std::to_string(features.size()));
  }
  double v = model.intercept;
  for (std::size_t j = 0; j < features.size(); ++j) v += model.coefficients[j] * features[j];
  return v;
}

double predict_mlr(const MlrModel& model, std::span<const double> features) {
  return std::max(0.0, predict_mlr_linear(model, features));
}

MlrData center_cells(std::span<const Sample> samples) {
  MlrData data;
  if (samples.empty()) return data;
  data.features = samples.front().channels;
  for (const Sample& s : samples) {
    if (s.channels != data.features) throw std::invalid_argument("center_cells: channel mismatch");
    const std::size_t cw = s.window / 2, cn = s.out_size / 2;
    for (std::size_t ch = 0; ch < s.channels; ++ch) data.x.push_back(s.feature(cw, cw, ch));
    data.y.push_back(s.target(cn, cn));
  }
  return data;
}

Predictor mlr_predictor(const MlrModel& model, std::size_t window) {
  const std::size_t n = model.coefficients.size();
  return {window, 1, n, [model, window, n](const Tensor& x) {
            const std::size_t batch = x.dim(0);
            const std::size_t stride = window * window * n;
            const std::size_t center = ((window / 2) * window + window / 2) * n;
            Tensor out({batch, 1});
            for (std::size_t b = 0; b < batch; ++b) {
              out[b] = predict_mlr(model, {x.data() + b * stride + center, n});
            }
            return out;
          }};
}

void write_mlr_csv(const MlrModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "channel,value\n" << std::setprecision(17);
  const std::size_t n = model.coefficients.size();
  for (std::size_t j = 0; j < n; ++j) {
    if (n == kFeatureChannels) {
      out << kChannelNames[j];
    } else {
      out << 'x' << j;
    }
    out << ',' << model.coefficients[j] << '\n';
  }
  out << "intercept," << model.intercept << '\n';
}

MlrModel read_mlr_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "channel,value") throw FormatError(path.string() + ": missing coefficient header");
  MlrModel model;
  bool have_intercept = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError(path.string() + ": malformed line " + line);
    const double value = std::stod(line.substr(comma + 1));
    if (line.compare(0, comma, "intercept") == 0) {
      model.intercept = value;
      have_intercept = true;
    } else {
      model.coefficients.push_back(value);
    }
  }
  if (!have_intercept) throw FormatError(path.string() + ": no intercept row");
  return model;
}

}  // namespace hyper3d
