#include "asl/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "asl/errors.hpp"

namespace asl {

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool to_double(const std::string& s, double& v) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

template <typename I>
bool to_int(const std::string& s, I& v) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

void TrackReport::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].estimate.finite() || !records[i].truth.finite())
      throw std::invalid_argument("track report: non-finite position at frame " + std::to_string(i));
    if (i > 0 && records[i].t_ms <= records[i - 1].t_ms)
      throw std::invalid_argument("track report: times must strictly increase (frame " + std::to_string(i) + ")");
  }
}

double motp(const TrackReport& report, MotpMode mode) {
  if (report.records.empty()) throw std::invalid_argument("motp: empty report");
  double sum = 0.0;
  for (const auto& r : report.records) {
    const double d = (r.estimate - r.truth).norm();
    sum += mode == MotpMode::kEuclidean ? d : d * d;
  }
  return sum / static_cast<double>(report.records.size());
}

double relative_improvement(double reference_motp, double proposal_motp) {
  if (!(reference_motp > 0.0)) throw std::invalid_argument("relative_improvement: reference MOTP must be > 0");
  return 100.0 * (reference_motp - proposal_motp) / reference_motp;
}

void restrict_to_common_frames(std::vector<TrackReport>& reports) {
  if (reports.empty()) return;
  std::vector<std::int64_t> common;
  for (const auto& r : reports.front().records) common.push_back(r.t_ms);
  std::sort(common.begin(), common.end());
  for (std::size_t k = 1; k < reports.size(); ++k) {
    std::vector<std::int64_t> times;
    for (const auto& r : reports[k].records) times.push_back(r.t_ms);
    std::sort(times.begin(), times.end());
    std::vector<std::int64_t> both;
    std::set_intersection(common.begin(), common.end(), times.begin(), times.end(), std::back_inserter(both));
    common = std::move(both);
  }
  for (auto& rep : reports)
    std::erase_if(rep.records, [&](const TrackRecord& r) { return !std::binary_search(common.begin(), common.end(), r.t_ms); });
}

std::string format_report_csv(const TrackReport& report) {
  std::string out = "t_ms,est_x,est_y,est_z,gt_x,gt_y,gt_z\n";
  for (const auto& r : report.records) {
    out += std::to_string(r.t_ms);
    for (std::size_t a = 0; a < 3; ++a) out += ',' + shortest(r.estimate[a]);
    for (std::size_t a = 0; a < 3; ++a) out += ',' + shortest(r.truth[a]);
    out += '\n';
  }
  return out;
}

TrackReport parse_report_csv(std::istream& in, const std::string& origin) {
  TrackReport rep;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line_no == 1) {
      if (line != "t_ms,est_x,est_y,est_z,gt_x,gt_y,gt_z")
        throw FormatError(origin + ":1: unexpected header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv(line);
    auto fail = [&](const std::string& msg) { return FormatError(origin + ":" + std::to_string(line_no) + ": " + msg); };
    if (f.size() != 7) throw fail("expected 7 fields, got " + std::to_string(f.size()));
    TrackRecord r;
    if (!to_int(f[0], r.t_ms)) throw fail("bad time '" + f[0] + "'");
    for (std::size_t a = 0; a < 3; ++a) {
      if (!to_double(f[1 + a], r.estimate[a])) throw fail("bad number '" + f[1 + a] + "'");
      if (!to_double(f[4 + a], r.truth[a])) throw fail("bad number '" + f[4 + a] + "'");
    }
    if (!rep.records.empty() && r.t_ms <= rep.records.back().t_ms) throw fail("time does not increase");
    rep.records.push_back(r);
  }
  if (line_no == 0) throw FormatError(origin + ": empty report file");
  return rep;
}

void write_report_csv(const std::string& path, const TrackReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << format_report_csv(report);
}

TrackReport read_report_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open report: " + path);
  return parse_report_csv(in, path);
}

const MatrixCell* ResultMatrix::find(const std::string& sequence, const std::string& method, int window_ms) const {
  for (const auto& c : cells)
    if (c.sequence == sequence && c.method == method && c.window_ms == window_ms) return &c;
  return nullptr;
}

ResultMatrix build_matrix(const std::vector<MatrixEntry>& entries, const MatrixOptions& options) {
  ResultMatrix m;
  m.title = options.title;
  std::vector<std::string> all_methods;
  std::set<int> windows;
  std::map<std::tuple<std::string, std::string, int>, MatrixEntry> by_key;
  for (const auto& e : entries) {
    if (e.sequence == kAverageRow) throw std::invalid_argument("build_matrix: 'Average' is reserved");
    if (std::find(m.sequences.begin(), m.sequences.end(), e.sequence) == m.sequences.end())
      m.sequences.push_back(e.sequence);
    if (std::find(all_methods.begin(), all_methods.end(), e.method) == all_methods.end())
      all_methods.push_back(e.method);
    windows.insert(e.window_ms);
    if (!by_key.emplace(std::make_tuple(e.sequence, e.method, e.window_ms), e).second)
      throw std::invalid_argument("build_matrix: duplicate entry " + e.sequence + "/" + e.method + "/" +
                                  std::to_string(e.window_ms));
  }
  m.windows.assign(windows.begin(), windows.end());
  for (const auto& method : all_methods)
    if (method != options.reference_method || options.show_reference) m.methods.push_back(method);
  const bool have_reference =
      std::find(all_methods.begin(), all_methods.end(), options.reference_method) != all_methods.end();

  auto frames_of = [&](const MatrixEntry& e) {
    const auto it = options.sequence_frames.find(e.sequence);
    return it != options.sequence_frames.end() ? it->second : e.frames;
  };
  auto entry = [&](const std::string& seq, const std::string& method, int w) -> const MatrixEntry& {
    const auto it = by_key.find(std::make_tuple(seq, method, w));
    if (it == by_key.end())
      throw std::invalid_argument("build_matrix: missing cell " + seq + "/" + method + "/" + std::to_string(w));
    return it->second;
  };
  auto average = [&](const std::string& method, int w, std::size_t& frames) {
    double num = 0.0, den = 0.0;
    frames = 0;
    for (const auto& seq : m.sequences) {
      const MatrixEntry& e = entry(seq, method, w);
      const std::size_t n = frames_of(e);
      frames += n;
      if (options.average == AverageMode::kMean) {
        num += e.motp;
        den += 1.0;
      } else {
        if (n == 0) throw std::invalid_argument("build_matrix: pooled average needs frame counts for " + seq);
        num += e.motp * static_cast<double>(n);
        den += static_cast<double>(n);
      }
    }
    return num / den;
  };

  std::vector<std::string> rows = m.sequences;
  rows.push_back(kAverageRow);
  for (const auto& row : rows) {
    for (int w : m.windows) {
      double ref = 0.0;
      if (have_reference) {
        std::size_t unused = 0;
        ref = row == kAverageRow ? average(options.reference_method, w, unused)
                                 : entry(row, options.reference_method, w).motp;
      }
      for (const auto& method : m.methods) {
        MatrixCell c{row, method, w, 0.0, 0, std::nullopt};
        if (row == kAverageRow) {
          c.motp = average(method, w, c.frames);
        } else {
          const MatrixEntry& e = entry(row, method, w);
          c.motp = e.motp;
          c.frames = frames_of(e);
        }
        if (have_reference && method != options.reference_method) c.delta_r = relative_improvement(ref, c.motp);
        m.cells.push_back(c);
      }
    }
  }
  return m;
}

std::string format_matrix_csv(const ResultMatrix& matrix) {
  std::string out = "sequence,method,window_ms,motp_m,delta_r_pct\n";
  for (const auto& c : matrix.cells) {
    out += c.sequence + ',' + c.method + ',' + std::to_string(c.window_ms) + ',' + fixed(c.motp, 6) + ',';
    if (c.delta_r) out += fixed(*c.delta_r, 2);
    out += '\n';
  }
  return out;
}

std::string format_matrix_text(const ResultMatrix& matrix) {
  std::vector<std::string> header = {"Sequence", "Metric"};
  for (int w : matrix.windows)
    for (const auto& method : matrix.methods) header.push_back(method + " " + std::to_string(w) + "ms");
  std::vector<std::vector<std::string>> lines = {header};
  std::vector<std::string> rows = matrix.sequences;
  rows.push_back(kAverageRow);
  for (const auto& row : rows) {
    std::vector<std::string> motp_line = {row, "MOTP(m)"};
    std::vector<std::string> dr_line = {"", "dr(%)"};
    for (int w : matrix.windows)
      for (const auto& method : matrix.methods) {
        const MatrixCell* c = matrix.find(row, method, w);
        motp_line.push_back(fixed(c->motp, 3));
        dr_line.push_back(c->delta_r ? fixed(*c->delta_r, 1) : "-");
      }
    lines.push_back(motp_line);
    lines.push_back(dr_line);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& l : lines)
    for (std::size_t i = 0; i < l.size(); ++i) width[i] = std::max(width[i], l[i].size());
  std::string out;
  if (!matrix.title.empty()) out += matrix.title + '\n';
  for (const auto& l : lines) {
    std::string text;
    for (std::size_t i = 0; i < l.size(); ++i) {
      const std::string pad(width[i] - l[i].size(), ' ');
      text += i < 2 ? l[i] + pad : pad + l[i];
      if (i + 1 < l.size()) text += "  ";
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out += text + '\n';
  }
  return out;
}

std::vector<ReferenceValue> read_reference_constants(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open reference constants: " + path);
  std::vector<ReferenceValue> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line_no == 1 || line.empty()) continue;
    const auto f = split_csv(line);
    auto fail = [&] { return FormatError(path + ":" + std::to_string(line_no) + ": malformed reference row"); };
    if (f.size() != 6) throw fail();
    ReferenceValue v;
    v.sequence = f[1];
    v.method = f[2];
    if (!to_int(f[0], v.table) || !to_int(f[3], v.window_ms) || !to_double(f[4], v.motp)) throw fail();
    if (!f[5].empty()) {
      double d = 0.0;
      if (!to_double(f[5], d)) throw fail();
      v.delta_r = d;
    }
    out.push_back(v);
  }
  return out;
}

std::map<std::string, std::size_t> read_sequence_frames(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open sequence frame counts: " + path);
  std::map<std::string, std::size_t> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line_no == 1 || line.empty()) continue;
    const auto f = split_csv(line);
    std::size_t n = 0;
    if (f.size() != 2 || !to_int(f[1], n))
      throw FormatError(path + ":" + std::to_string(line_no) + ": malformed frame-count row");
    out[f[0]] = n;
  }
  return out;
}

namespace {

// Column layout of each published table; the first entries name methods introduced elsewhere.
const std::map<int, std::vector<std::string>>& published_layouts() {
  static const std::map<int, std::vector<std::string>> layouts = {
      {3, {"SRP", "GMBF", "CNN"}},
      {4, {"GMBF", "CNNf15"}},
      {5, {"CNNt15", "CNNf15"}},
      {6, {"GMBF", "CNNf15+11"}},
      {8, {"GMBF", "CNNf15+11+st"}},
  };
  return layouts;
}

}  // namespace

std::vector<std::string> published_methods(const std::vector<ReferenceValue>& values, int table) {
  if (std::none_of(values.begin(), values.end(), [&](const ReferenceValue& v) { return v.table == table; }))
    throw ConfigError("no reference values for table " + std::to_string(table));
  const auto it = published_layouts().find(table);
  if (it != published_layouts().end()) return it->second;
  std::vector<std::string> methods;
  for (const auto& v : values)
    if (v.table == table && std::find(methods.begin(), methods.end(), v.method) == methods.end())
      methods.push_back(v.method);
  return methods;
}

ResultMatrix published_table(const std::vector<ReferenceValue>& values, int table,
                             const std::map<std::string, std::size_t>& sequence_frames, const std::string& title) {
  std::vector<std::string> methods = published_methods(values, table);
  MatrixOptions options;
  options.title = title.empty() ? "published table " + std::to_string(table) : title;
  options.sequence_frames = sequence_frames;
  options.show_reference = std::find(methods.begin(), methods.end(), options.reference_method) != methods.end();
  if (!options.show_reference) methods.insert(methods.begin(), options.reference_method);
  std::vector<MatrixEntry> entries;
  for (const auto& method : methods) {
    // The table itself wins; otherwise the lowest-numbered table that lists the method.
    int source = -1;
    for (const auto& v : values) {
      if (v.method != method) continue;
      if (v.table == table) {
        source = table;
        break;
      }
      if (source == -1 || v.table < source) source = v.table;
    }
    if (source == -1) throw ConfigError("no reference values for method " + method);
    for (const auto& v : values) {
      if (v.table != source || v.method != method || v.sequence == kAverageRow) continue;
      const auto f = sequence_frames.find(v.sequence);
      entries.push_back({v.sequence, v.method, v.window_ms, v.motp, f == sequence_frames.end() ? 0 : f->second});
    }
  }
  return build_matrix(entries, options);
}

}  // namespace asl

