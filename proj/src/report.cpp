#include "pbench/report.hpp"

#include <boost/algorithm/string.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace pbench {

namespace {

std::string opt(const std::optional<double>& v) { return v ? fixed(*v) : "-"; }

std::string shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& s) {
  double v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ReportError("bad number '" + s + "'");
  return v;
}

std::uint64_t to_count(const std::string& s) {
  std::uint64_t v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ReportError("bad count '" + s + "'");
  return v;
}

std::optional<double> to_opt(const std::string& s) {
  if (s == "-") return std::nullopt;
  return to_double(s);
}

std::string pct(double fraction, int precision = 1) { return fixed(100.0 * fraction, precision) + "%"; }

std::string rate_label(double rate) {
  if (rate == 0) return "0 (clean)";
  std::string s = fixed(100.0 * rate, 2);
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s + "%";
}

std::string ci_text(const std::optional<double>& mean, const std::optional<SeedInterval>& ci) {
  if (!mean) return "n/a";
  std::string out = pct(*mean);
  if (ci) out += " [" + fixed(ci->lo, 1) + ", " + fixed(ci->hi, 1) + "]";
  return out;
}

std::string pad(std::string s, std::size_t w) {
  // Width counts code points so the check and cross marks do not skew columns.
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xc0) != 0x80;
  if (cps < w) s.append(w - cps, ' ');
  return s;
}

std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) w[i] = header[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], r[i].size());
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? " | " : "") + pad(cells[i], w[i]);
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
  };
  line(header);
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "-+-" : "") + std::string(w[i], '-');
  out += '\n';
  for (const auto& r : rows) line(r);
  return out;
}

const char* kCellHeader =
    "kind\trate\tseed\tflipped\trequested\teligible\tstatus\taccuracy\tasr\tasr_triggered\tbeta_test\tdelta_acc\t"
    "source_recall\n";

}  // namespace

std::string fixed(double v, int precision) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  std::string s = os.str();
  if (s.rfind("-0.", 0) == 0 && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::vector<SummaryRow> summarize(const std::vector<CellRecord>& cells) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<const CellRecord*>> groups;
  for (const auto& c : cells) {
    std::size_t i = 0;
    while (i < rows.size() && !(rows[i].kind == c.kind && rows[i].rate == c.rate)) ++i;
    if (i == rows.size()) {
      rows.push_back({});
      rows.back().kind = c.kind;
      rows.back().rate = c.rate;
      groups.emplace_back();
    }
    groups[i].push_back(&c);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& row = rows[i];
    std::vector<double> acc, asr, trig, beta;
    for (const auto* c : groups[i]) {
      ++row.runs;
      if (c->failed) {
        ++row.failures;
        continue;
      }
      row.flipped = std::max(row.flipped, c->flipped);
      row.clamped = row.clamped || c->requested > c->eligible;
      acc.push_back(c->accuracy);
      beta.push_back(c->beta_test);
      if (c->asr) asr.push_back(*c->asr);
      if (c->asr_triggered) trig.push_back(*c->asr_triggered);
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    if (!acc.empty()) {
      row.accuracy = mean(acc);
      row.beta_test = mean(beta);
    }
    if (!asr.empty()) row.asr = mean(asr);
    if (asr.size() >= 2) row.asr_ci = ci_across_seeds(asr);
    if (!trig.empty()) row.asr_triggered = mean(trig);
    if (trig.size() >= 2) row.asr_triggered_ci = ci_across_seeds(trig);
  }
  return rows;
}

std::string cells_tsv(const std::vector<CellRecord>& cells) {
  std::string out = kCellHeader;
  for (const auto& c : cells) {
    out += std::string(attack_kind_name(c.kind)) + '\t' + shortest(c.rate) + '\t' + std::to_string(c.seed) + '\t' +
           std::to_string(c.flipped) + '\t' + std::to_string(c.requested) + '\t' + std::to_string(c.eligible) + '\t';
    if (c.failed) {
      std::string err = c.error;
      std::replace(err.begin(), err.end(), '\t', ' ');
      std::replace(err.begin(), err.end(), '\n', ' ');
      out += "failed:" + err + "\t-\t-\t-\t-\t-\t-\n";
      continue;
    }
    out += "ok\t" + fixed(c.accuracy) + '\t' + opt(c.asr) + '\t' + opt(c.asr_triggered) + '\t' + fixed(c.beta_test) +
           '\t' + fixed(c.delta_acc) + '\t' + opt(c.source_recall) + '\n';
  }
  return out;
}

std::vector<CellRecord> parse_cells_tsv(std::string_view text) {
  std::vector<std::string> lines;
  boost::split(lines, text, boost::is_any_of("\n"));
  if (lines.empty() || lines[0] + "\n" != kCellHeader) throw ReportError("cells file: unexpected header");
  std::vector<CellRecord> cells;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> f;
    boost::split(f, lines[i], boost::is_any_of("\t"));
    if (f.size() != 13) throw ReportError("cells file line " + std::to_string(i + 1) + ": expected 13 fields");
    CellRecord c;
    c.kind = parse_attack_kind(f[0]);
    c.rate = to_double(f[1]);
    c.seed = to_count(f[2]);
    c.flipped = to_count(f[3]);
    c.requested = to_count(f[4]);
    c.eligible = to_count(f[5]);
    if (f[6] != "ok") {
      c.failed = true;
      c.error = f[6].rfind("failed:", 0) == 0 ? f[6].substr(7) : f[6];
    } else {
      c.accuracy = to_double(f[7]);
      c.asr = to_opt(f[8]);
      c.asr_triggered = to_opt(f[9]);
      c.beta_test = to_double(f[10]);
      c.delta_acc = to_double(f[11]);
      c.source_recall = to_opt(f[12]);
    }
    cells.push_back(std::move(c));
  }
  return cells;
}

std::string summary_tsv(const std::vector<SummaryRow>& rows) {
  std::string out =
      "kind\trate\tflipped\tclamped\truns\tfailures\taccuracy\tbeta_test\tasr\tasr_lo\tasr_hi\tasr_triggered\t"
      "asr_triggered_lo\tasr_triggered_hi\n";
  for (const auto& r : rows) {
    auto ci = [](const std::optional<SeedInterval>& c, bool hi) {
      return c ? fixed((hi ? c->hi : c->lo) / 100.0) : std::string("-");
    };
    out += std::string(attack_kind_name(r.kind)) + '\t' + shortest(r.rate) + '\t' + std::to_string(r.flipped) + '\t' +
           (r.clamped ? "yes" : "no") + '\t' + std::to_string(r.runs) + '\t' + std::to_string(r.failures) + '\t' +
           fixed(r.accuracy) + '\t' + fixed(r.beta_test) + '\t' + opt(r.asr) + '\t' + ci(r.asr_ci, false) + '\t' +
           ci(r.asr_ci, true) + '\t' + opt(r.asr_triggered) + '\t' + ci(r.asr_triggered_ci, false) + '\t' +
           ci(r.asr_triggered_ci, true) + '\n';
  }
  return out;
}

std::string label_flip_table(const std::vector<SummaryRow>& rows) {
  std::vector<std::vector<std::string>> body;
  for (const auto& r : rows) {
    if (r.kind != AttackKind::label_flip) continue;
    std::string flipped = std::to_string(r.flipped) + (r.clamped ? " (clamped)" : "");
    std::string acc = r.runs == r.failures ? "failed" : pct(r.accuracy);
    if (r.failures && r.runs != r.failures) acc += " (" + std::to_string(r.failures) + " failed)";
    body.push_back({rate_label(r.rate), flipped, acc, ci_text(r.asr, r.asr_ci)});
  }
  return table({"Rate", "Flipped", "Accuracy", "ASR (95% CI)"}, body);
}

std::string backdoor_table(const std::vector<SummaryRow>& rows) {
  std::vector<std::vector<std::string>> body;
  for (const auto& r : rows) {
    if (r.kind != AttackKind::backdoor_patch) continue;
    std::string acc = r.runs == r.failures ? "failed" : pct(r.accuracy);
    body.push_back({rate_label(r.rate), std::to_string(r.flipped), acc, ci_text(r.asr, r.asr_ci),
                    ci_text(r.asr_triggered, r.asr_triggered_ci)});
  }
  return table({"Rate", "Flipped", "Overall accuracy", "Clean ASR", "Triggered ASR"}, body);
}

RenderedReport report_render(const std::vector<CellRecord>& cells) {
  const auto rows = summarize(cells);
  RenderedReport out;
  out.machine_cells = cells_tsv(cells);
  out.machine_summary = summary_tsv(rows);
  out.human = "Targeted label-flip: Truck -> Car\n" + label_flip_table(rows) + "\nBackdoor patch attack\n" +
              backdoor_table(rows);
  return out;
}

std::string metrics_tsv(const MetricsReport& m) {
  std::string out;
  out += "accuracy\t" + shortest(m.overall_accuracy) + "\n";
  out += "total\t" + std::to_string(m.total) + "\n";
  out += "asr_clean\t" + (m.asr_clean ? shortest(*m.asr_clean) : "-") + "\n";
  out += "asr_triggered\t" + (m.asr_triggered ? shortest(*m.asr_triggered) : "-") + "\n";
  out += "beta_test\t" + (m.beta_test ? shortest(*m.beta_test) : "-") + "\n";
  out += "delta_acc\t" + (m.delta_acc ? shortest(*m.delta_acc) : "-") + "\n";
  auto o = [&](const std::optional<double>& v) { return v ? shortest(*v) : std::string("-"); };
  for (const auto& c : m.per_class)
    out += "class\t" + c.name + "\t" + std::to_string(c.support) + "\t" + o(c.precision) + "\t" + o(c.recall) + "\t" +
           o(c.f1) + "\n";
  for (std::size_t r = 0; r < m.confusion.size(); ++r) {
    out += "confusion\t" + m.classes[r];
    for (auto v : m.confusion[r]) out += "\t" + std::to_string(v);
    out += "\n";
  }
  return out;
}

MetricsReport parse_metrics_tsv(std::string_view text) {
  MetricsReport m;
  std::vector<std::string> lines;
  boost::split(lines, text, boost::is_any_of("\n"));
  for (const auto& line : lines) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    boost::split(f, line, boost::is_any_of("\t"));
    const auto& k = f[0];
    if (f.size() < 2) throw ReportError("metrics file: malformed line '" + line + "'");
    if (k == "accuracy") m.overall_accuracy = to_double(f[1]);
    else if (k == "total") m.total = to_count(f[1]);
    else if (k == "asr_clean") m.asr_clean = to_opt(f[1]);
    else if (k == "asr_triggered") m.asr_triggered = to_opt(f[1]);
    else if (k == "beta_test") m.beta_test = to_opt(f[1]);
    else if (k == "delta_acc") m.delta_acc = to_opt(f[1]);
    else if (k == "class") {
      if (f.size() != 6) throw ReportError("metrics file: malformed class line");
      m.classes.push_back(f[1]);
      m.per_class.push_back({f[1], to_count(f[2]), to_opt(f[3]), to_opt(f[4]), to_opt(f[5])});
    } else if (k == "confusion") {
      std::vector<std::size_t> row;
      for (std::size_t i = 2; i < f.size(); ++i) row.push_back(to_count(f[i]));
      m.confusion.push_back(std::move(row));
    } else {
      throw ReportError("metrics file: unknown key '" + k + "'");
    }
  }
  return m;
}

}  // namespace pbench
