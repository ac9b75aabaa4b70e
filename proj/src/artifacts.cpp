#include "pbt/artifacts.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "pbt/events.hpp"

namespace pbt {

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

HyperValue parse_cell(const std::string& cell) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() && *end == '\0') return v;
  return cell;
}

double parse_score(const std::string& cell) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0') throw Error("curves.csv: bad score '" + cell + "'");
  return v;
}

}  // namespace

void write_curves_csv(const std::filesystem::path& path, std::span<const CurveRecord> curves,
                      std::span<const HyperparamSpec> specs) {
  std::set<std::string> names;
  for (const auto& spec : specs) names.insert(spec.name);
  for (const auto& r : curves) {
    for (const auto& [name, value] : r.h) names.insert(name);
  }
  auto out = open_for_write(path);
  out << "step,member_id,p";
  for (const auto& name : names) out << ',' << name;
  out << '\n';
  for (const auto& r : curves) {
    out << r.step << ',' << r.member_id << ',' << format_double(r.p);
    for (const auto& name : names) {
      out << ',';
      if (const auto it = r.h.find(name); it != r.h.end()) out << format_value(it->second);
    }
    out << '\n';
  }
}

std::vector<CurveRecord> read_curves_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "step" || header[1] != "member_id" || header[2] != "p") {
    throw Error(path.string() + ": unexpected header");
  }
  std::vector<CurveRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    }
    CurveRecord r;
    try {
      r.step = std::stoll(cells[0]);
      r.member_id = std::stoi(cells[1]);
    } catch (const std::logic_error&) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": bad step or member id");
    }
    r.p = parse_score(cells[2]);
    for (std::size_t i = 3; i < cells.size(); ++i) {
      if (!cells[i].empty()) r.h.emplace(header[i], parse_cell(cells[i]));
    }
    out.push_back(std::move(r));
  }
  return out;
}

Json member_to_json(const MemberState& m) {
  Json theta = Json::array();
  for (Eigen::Index i = 0; i < m.theta.size(); ++i) theta.push_back(m.theta[i]);
  return Json{{"member_id", m.id},
              {"t", m.t},
              {"p", score_to_json(m.p)},
              {"h", to_json(m.h)},
              {"ancestor_id", m.ancestor_id},
              {"failed", m.failed},
              {"theta", theta}};
}

void write_final_population(const std::filesystem::path& path,
                            std::span<const MemberState> population) {
  Json list = Json::array();
  for (const auto& m : population) list.push_back(member_to_json(m));
  write_json_file(path, list);
}

std::vector<MemberState> read_final_population(const std::filesystem::path& path) {
  const Json list = read_json_file(path);
  if (!list.is_array()) throw Error(path.string() + ": expected a list of members");
  std::vector<MemberState> out;
  try {
    for (const auto& j : list) {
      MemberState m;
      m.id = j.at("member_id").get<MemberId>();
      m.t = j.at("t").get<std::int64_t>();
      m.p = score_from_json(j.at("p"));
      m.h = hyperparams_from_json(j.at("h"));
      m.ancestor_id = j.at("ancestor_id").get<MemberId>();
      m.failed = j.at("failed").get<bool>();
      const auto theta = j.at("theta").get<std::vector<double>>();
      m.theta = Eigen::Map<const ParamVector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
      out.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(path.string() + ": " + ex.what());
  }
  return out;
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  auto out = open_for_write(path);
  out << j.dump(2) << '\n';
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return Json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error(path.string() + ": " + ex.what());
  }
}

void write_run_artifacts(const std::filesystem::path& run_dir, const ConfigFile& config,
                         const RunReport& report) {
  write_json_file(run_dir / kResolvedConfigFile, to_json(config));
  write_curves_csv(run_dir / kCurvesFile, report.curves, report.hyperparams);
  write_final_population(run_dir / kFinalPopulationFile, report.final_population);
  Json best = member_to_json(report.best);
  best["step_calls"] = report.step_calls;
  write_json_file(run_dir / kBestFile, best);
}

void write_failure_marker(const std::filesystem::path& run_dir, const std::string& reason) {
  auto out = open_for_write(run_dir / kFailedMarker);
  out << reason << '\n';
}

}  // namespace pbt
