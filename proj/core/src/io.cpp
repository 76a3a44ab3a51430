#include "flavent/io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "flavent/error.hpp"
#include "flavent/hash.hpp"
#include "flavent/text.hpp"

namespace flavent {

namespace {

struct CsvReader {
  CsvReader(std::istream& stream, std::string name) : in(stream), source(std::move(name)) {}

  std::istream& in;
  std::string source;
  int line = 0;
  std::string buf;

  // Next non-empty line split on commas, or false at end of input.
  bool next(std::vector<std::string_view>& fields) {
    while (std::getline(in, buf)) {
      ++line;
      if (!buf.empty() && buf.back() == '\r') buf.pop_back();
      if (trim(buf).empty()) continue;
      fields = split(buf, ',');
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ValidationError(source + ":" + std::to_string(line) + ": " + msg);
  }

  double number(std::string_view f, const char* what) const {
    const auto v = parse_double(f);
    if (!v) fail(std::string("bad ") + what + " '" + std::string(f) + "'");
    return *v;
  }

  void expect_header(const std::vector<std::string_view>& fields, std::string_view header) const {
    const auto want = split(header, ',');
    if (fields.size() < want.size()) fail("header must start with '" + std::string(header) + "'");
    for (std::size_t i = 0; i < want.size(); ++i)
      if (trim(fields[i]) != want[i]) fail("header must start with '" + std::string(header) + "'");
  }
};

void join(std::ostream& out, std::span<const double> v) {
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << format_double(v[i]);
}

}  // namespace

void write_events(std::ostream& out, std::span<const EventRecord> events) {
  out << kEventHeader << '\n';
  for (const auto& e : events)
    out << format_double(e.t1) << ',' << format_double(e.t2) << ',' << format_double(e.dt_true)
        << ',' << to_string(e.cls_true) << ',' << format_double(e.dz_rec) << ','
        << format_double(e.dt_rec) << ',' << to_string(e.cls_assigned) << ','
        << to_string(e.category) << ',' << e.stream << ',' << e.index << '\n';
}

std::vector<EventRecord> read_events(std::istream& in, const std::string& source) {
  CsvReader r{in, source};
  std::vector<std::string_view> f;
  if (!r.next(f)) r.fail("missing header");
  r.expect_header(f, kEventHeader);
  std::vector<EventRecord> out;
  while (r.next(f)) {
    const auto row = out.size() + 1;
    const auto fail = [&](const std::string& msg) {
      r.fail("data row " + std::to_string(row) + ": " + msg);
    };
    const auto num = [&](std::string_view v, const char* what) {
      const auto x = parse_double(v);
      if (!x) fail(std::string("bad ") + what + " '" + std::string(v) + "'");
      return *x;
    };
    if (f.size() != 10) fail("expected 10 fields, got " + std::to_string(f.size()));
    EventRecord e;
    try {
      e.t1 = num(f[0], "t1_ps");
      e.t2 = num(f[1], "t2_ps");
      e.dt_true = num(f[2], "dt_true_ps");
      e.cls_true = flavour_class_from_string(trim(f[3]));
      e.dz_rec = num(f[4], "dz_rec_um");
      e.dt_rec = num(f[5], "dt_rec_ps");
      e.cls_assigned = flavour_class_from_string(trim(f[6]));
      e.category = category_from_string(trim(f[7]));
    } catch (const ValidationError& ex) {
      if (std::string_view(ex.what()).starts_with(r.source + ":")) throw;
      fail(ex.what());
    }
    const auto stream = parse_uint(f[8]);
    const auto index = parse_uint(f[9]);
    if (!stream || *stream > 0xFFFFFFFFull || !index) fail("bad stream or index");
    e.stream = static_cast<std::uint32_t>(*stream);
    e.index = *index;
    if (e.t1 < 0 || e.t2 < 0 || e.dt_true < 0 || e.dt_rec < 0) fail("negative time");
    out.push_back(e);
  }
  return out;
}

void write_counts(std::ostream& out, const BinnedCounts& c) {
  out << "bin,lo_ps,hi_ps,n_of,n_sf,var_of,var_sf,cov\n";
  for (std::size_t i = 0; i < c.size(); ++i)
    out << i + 1 << ',' << format_double(c.binning.lo(i)) << ',' << format_double(c.binning.hi(i))
        << ',' << format_double(c.n_of[i]) << ',' << format_double(c.n_sf[i]) << ','
        << format_double(c.var_of[i]) << ',' << format_double(c.var_sf[i]) << ','
        << format_double(c.cov[i]) << '\n';
}

BinnedCounts read_counts(std::istream& in, const std::string& source) {
  CsvReader r{in, source};
  std::vector<std::string_view> f;
  if (!r.next(f)) r.fail("missing header");
  r.expect_header(f, "bin,lo_ps,hi_ps,n_of,n_sf,var_of,var_sf,cov");
  std::vector<double> edges;
  BinnedCounts c;
  while (r.next(f)) {
    if (f.size() != 8) r.fail("expected 8 fields");
    const double lo = r.number(f[1], "lo_ps");
    const double hi = r.number(f[2], "hi_ps");
    if (edges.empty())
      edges.push_back(lo);
    else if (edges.back() != lo)
      r.fail("bin windows are not contiguous");
    edges.push_back(hi);
    c.n_of.push_back(r.number(f[3], "n_of"));
    c.n_sf.push_back(r.number(f[4], "n_sf"));
    c.var_of.push_back(r.number(f[5], "var_of"));
    c.var_sf.push_back(r.number(f[6], "var_sf"));
    c.cov.push_back(r.number(f[7], "cov"));
  }
  if (edges.empty()) r.fail("no bins");
  c.binning = Binning(edges);
  c.poisson = false;
  return c;
}

void write_spectrum(std::ostream& out, const AsymmetrySpectrum& s) {
  out << "bin,lo_ps,hi_ps,a,stat,syst_total";
  for (const auto& [name, v] : s.syst_breakdown) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << i + 1 << ',' << format_double(s.binning.lo(i)) << ',' << format_double(s.binning.hi(i))
        << ',' << format_double(s.a[i]) << ',' << format_double(s.stat_err[i]) << ','
        << format_double(s.syst_err[i]);
    for (const auto& [name, v] : s.syst_breakdown) out << ',' << format_double(v[i]);
    out << '\n';
  }
}

AsymmetrySpectrum read_spectrum(std::istream& in, const std::string& source) {
  CsvReader r{in, source};
  std::vector<std::string_view> f;
  if (!r.next(f)) r.fail("missing header");
  r.expect_header(f, "bin,lo_ps,hi_ps,a,stat,syst_total");
  AsymmetrySpectrum s;
  const std::size_t columns = f.size();
  for (std::size_t k = 6; k < columns; ++k) s.syst_breakdown.emplace_back(std::string(trim(f[k])), std::vector<double>{});
  std::vector<double> edges;
  while (r.next(f)) {
    if (f.size() != columns)
      r.fail("expected " + std::to_string(columns) + " fields, got " + std::to_string(f.size()));
    const auto bin = parse_uint(f[0]);
    if (!bin || *bin != s.a.size() + 1) r.fail("bin index out of sequence");
    const double lo = r.number(f[1], "lo_ps");
    const double hi = r.number(f[2], "hi_ps");
    if (edges.empty())
      edges.push_back(lo);
    else if (edges.back() != lo)
      r.fail("bin windows are not contiguous");
    edges.push_back(hi);
    s.a.push_back(r.number(f[3], "a"));
    const double stat = r.number(f[4], "stat");
    const double syst = r.number(f[5], "syst_total");
    if (!(stat >= 0.0) || !(syst >= 0.0)) r.fail("errors must be >= 0");
    s.stat_err.push_back(stat);
    s.syst_err.push_back(syst);
    for (std::size_t k = 6; k < columns; ++k) s.syst_breakdown[k - 6].second.push_back(r.number(f[k], "systematic"));
  }
  if (edges.empty()) r.fail("no bins");
  try {
    s.binning = Binning(edges);
  } catch (const ValidationError& e) {
    r.fail(e.what());
  }
  s.degenerate.assign(s.a.size(), false);
  return s;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix(std::istream& in, const std::string& source) {
  CsvReader r{in, source};
  std::vector<std::string_view> f;
  std::vector<std::vector<double>> rows;
  while (r.next(f)) {
    std::vector<double> row;
    for (auto x : f) row.push_back(r.number(x, "matrix entry"));
    if (!rows.empty() && row.size() != rows.front().size()) r.fail("ragged matrix row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) r.fail("empty matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

namespace {

void write_response(std::ostream& out, const ResponseMatrix& r) {
  out << "class," << to_string(r.cls) << '\n';
  out << "binning," << r.binning.to_string() << '\n';
  out << "binning_hash," << sha256_hex(r.binning.to_string()) << '\n';
  out << "truth_totals,";
  join(out, {r.truth_totals.data(), static_cast<std::size_t>(r.truth_totals.size())});
  out << '\n';
  out << "overflow," << format_double(r.truth_overflow) << ',' << format_double(r.reco_overflow) << '\n';
  for (Eigen::Index i = 0; i < r.counts.rows(); ++i) {
    out << "reco_" << i + 1;
    for (Eigen::Index j = 0; j < r.counts.cols(); ++j) out << ',' << format_double(r.counts(i, j));
    out << '\n';
  }
}

ResponseMatrix read_response(CsvReader& r) {
  std::vector<std::string_view> f;
  const auto row = [&](std::string_view key) {
    if (!r.next(f)) r.fail("unexpected end of response file, expected '" + std::string(key) + "'");
    if (trim(f[0]) != key) r.fail("expected row '" + std::string(key) + "'");
    std::vector<std::string_view> rest(f.begin() + 1, f.end());
    return rest;
  };
  const auto numbers = [&](const std::vector<std::string_view>& v) {
    std::vector<double> out;
    for (auto x : v) out.push_back(r.number(x, "value"));
    return out;
  };
  ResponseMatrix m;
  auto cls = row("class");
  if (cls.size() != 1) r.fail("class row needs one value");
  try {
    m.cls = flavour_class_from_string(trim(cls[0]));
    m.binning = Binning(numbers(row("binning")));
  } catch (const ValidationError& e) {
    r.fail(e.what());
  }
  auto hash = row("binning_hash");
  if (hash.size() != 1 || trim(hash[0]) != sha256_hex(m.binning.to_string()))
    r.fail("binning_hash does not match the binning row");
  const auto n = static_cast<Eigen::Index>(m.binning.size());
  const auto totals = numbers(row("truth_totals"));
  if (totals.size() != m.binning.size()) r.fail("truth_totals needs one value per bin");
  m.truth_totals = Eigen::Map<const Eigen::VectorXd>(totals.data(), n);
  const auto overflow = numbers(row("overflow"));
  if (overflow.size() != 2) r.fail("overflow row needs truth and reco values");
  m.truth_overflow = overflow[0];
  m.reco_overflow = overflow[1];
  m.counts.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto v = numbers(row("reco_" + std::to_string(i + 1)));
    if (static_cast<Eigen::Index>(v.size()) != n) r.fail("response row needs one value per truth bin");
    for (Eigen::Index j = 0; j < n; ++j) m.counts(i, j) = v[static_cast<std::size_t>(j)];
  }
  try {
    m.validate();
  } catch (const ValidationError& e) {
    r.fail(e.what());
  }
  return m;
}

}  // namespace

void write_responses(std::ostream& out, const ResponseMatrix& of, const ResponseMatrix& sf) {
  write_response(out, of);
  write_response(out, sf);
}

std::pair<ResponseMatrix, ResponseMatrix> read_responses(std::istream& in, const std::string& source) {
  CsvReader r{in, source};
  ResponseMatrix of = read_response(r);
  ResponseMatrix sf = read_response(r);
  if (of.cls != FlavourClass::OF || sf.cls != FlavourClass::SF)
    r.fail("response file must hold the OF block, then the SF block");
  if (!(of.binning == sf.binning)) r.fail("OF and SF responses use different binnings");
  return {std::move(of), std::move(sf)};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << content;
  if (!out) throw ValidationError("write failed for " + path.string());
}

}  // namespace flavent
