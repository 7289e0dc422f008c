#include "iganet/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace iganet {

namespace {

void check_batch(const std::vector<Pose3d>& pred, const std::vector<Pose3d>& gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("metrics: batch sizes differ (" + std::to_string(pred.size()) +
                                " vs " + std::to_string(gt.size()) + ")");
  }
  if (pred.empty()) throw std::invalid_argument("metrics: empty batch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gt[i].size() || pred[i].empty()) {
      throw std::invalid_argument("metrics: joint counts differ at sample " + std::to_string(i));
    }
  }
}

double joint_error(const Joint3& a, const Joint3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

std::vector<double> per_sample_mpjpe(const std::vector<Pose3d>& pred,
                                     const std::vector<Pose3d>& gt) {
  check_batch(pred, gt);
  std::vector<double> out(pred.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < pred[i].size(); ++j) acc += joint_error(pred[i][j], gt[i][j]);
    out[i] = acc / static_cast<double>(pred[i].size());
  }
  return out;
}

double mpjpe(const std::vector<Pose3d>& pred, const std::vector<Pose3d>& gt) {
  check_batch(pred, gt);
  double acc = 0.0;
  std::size_t joints = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < pred[i].size(); ++j) acc += joint_error(pred[i][j], gt[i][j]);
    joints += pred[i].size();
  }
  return acc / static_cast<double>(joints);
}

double pck(const std::vector<Pose3d>& pred, const std::vector<Pose3d>& gt, double threshold_mm) {
  if (threshold_mm < 0.0) throw std::invalid_argument("pck: negative threshold");
  check_batch(pred, gt);
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < pred[i].size(); ++j) {
      if (joint_error(pred[i][j], gt[i][j]) <= threshold_mm) ++correct;
      ++total;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

double auc(const std::vector<Pose3d>& pred, const std::vector<Pose3d>& gt) {
  double acc = 0.0;
  for (int i = 0; i < kAucPoints; ++i) acc += pck(pred, gt, kAucStepMm * i);
  return acc / kAucPoints;
}

ActionTable per_action_table(const std::vector<double>& sample_mpjpe,
                             const std::vector<std::string>& actions, bool row_mean_avg) {
  if (sample_mpjpe.size() != actions.size()) {
    throw std::invalid_argument("per_action_table: label count does not match sample count");
  }
  std::map<std::string, std::pair<double, int>> groups;  // action -> (sum, count)
  for (std::size_t i = 0; i < sample_mpjpe.size(); ++i) {
    const std::string key = actions[i].empty() ? "(unlabeled)" : actions[i];
    auto& [sum, count] = groups[key];
    sum += sample_mpjpe[i];
    ++count;
  }

  ActionTable table;
  table.row_mean = row_mean_avg;
  double total_sum = 0.0;
  int total_count = 0;
  for (const auto& [action, sc] : groups) {
    if (sc.second == 0) {
      table.warnings.push_back("action '" + action + "' has no samples; omitted");
      continue;
    }
    table.rows.push_back({action, sc.second, sc.first / sc.second});
    total_sum += sc.first;
    total_count += sc.second;
  }
  if (row_mean_avg && !table.rows.empty()) {
    double acc = 0.0;
    for (const auto& r : table.rows) acc += r.mpjpe_mm;
    table.avg = acc / static_cast<double>(table.rows.size());
  } else if (total_count > 0) {
    table.avg = total_sum / total_count;
  }
  return table;
}

std::string ActionTable::to_text() const {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.action.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w + 2)) << "action" << std::right
     << std::setw(8) << "n" << std::setw(12) << "mpjpe_mm" << '\n';
  os << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(w + 2)) << r.action << std::right
       << std::setw(8) << r.count << std::setw(12) << r.mpjpe_mm << '\n';
  }
  os << std::left << std::setw(static_cast<int>(w + 2)) << (row_mean ? "Avg(rows)" : "Avg")
     << std::right << std::setw(8) << "" << std::setw(12) << avg << '\n';
  return os.str();
}

nlohmann::json ActionTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"action", r.action}, {"count", r.count}, {"mpjpe_mm", r.mpjpe_mm}});
  }
  return nlohmann::json{{"rows", rows_json}, {"avg_mpjpe_mm", avg}, {"row_mean_avg", row_mean}};
}

std::string ActionTable::to_csv() const {
  std::ostringstream os;
  os << "action,count,mpjpe_mm\n";
  os << std::setprecision(17);
  for (const auto& r : rows) os << r.action << ',' << r.count << ',' << r.mpjpe_mm << '\n';
  os << (row_mean ? "Avg(rows)" : "Avg") << ",," << avg << '\n';
  return os.str();
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"mpjpe_mm", mpjpe_mm},
                   {"pck_pct", pck_pct},
                   {"auc_pct", auc_pct},
                   {"per_sample_mpjpe_mm", per_sample}};
  if (!per_action.empty()) {
    nlohmann::json pa = nlohmann::json::object();
    for (const auto& [action, v] : per_action) {
      pa[action] = {{"mpjpe_mm", v}, {"count", per_action_count.at(action)}};
    }
    j["per_action"] = pa;
  }
  if (mpjpe_no_flip_mm >= 0.0) j["mpjpe_no_flip_mm"] = mpjpe_no_flip_mm;
  return j;
}

}  // namespace iganet
