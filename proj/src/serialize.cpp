#include "nct/serialize.hpp"

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace nct {

namespace {

cplx cplx_from_json(const ojson& j) {
  if (!j.is_array() || j.size() != 2) {
    throw ParameterError("expected [re, im] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

ojson cplx_to_json(cplx v) { return ojson::array({v.real(), v.imag()}); }

void require(bool ok, const char* what) {
  if (!ok) throw ParameterError(std::string("malformed input: ") + what);
}

}  // namespace

std::string dump_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

ojson series_to_json(const TwistedSeries& a) {
  ojson j;
  j["format"] = "twisted-series/1";
  j["theta"] = a.theta();
  j["half_width"] = a.half_width();
  ojson coeffs = ojson::array();
  for (const auto& [idx, c] : a.coeffs()) {  // std::map: already (m, n) sorted
    coeffs.push_back(ojson::array({idx.m, idx.n, c.real(), c.imag()}));
  }
  j["coeffs"] = std::move(coeffs);
  return j;
}

TwistedSeries series_from_json(const ojson& j) {
  require(j.is_object(), "series must be an object");
  require(j.value("format", "") == std::string("twisted-series/1"),
          "unknown series format");
  require(j.contains("theta") && j.contains("half_width") &&
              j.contains("coeffs"),
          "series fields missing");
  TwistedSeries a(j["theta"].get<double>(), j["half_width"].get<int>());
  for (const auto& row : j["coeffs"]) {
    require(row.is_array() && row.size() == 4, "coefficient row shape");
    a.add(row[0].get<int>(), row[1].get<int>(),
          cplx(row[2].get<double>(), row[3].get<double>()));
  }
  return a;
}

ojson geometry_to_json(const ModuleGeometry& g) {
  ojson j;
  j["r"] = g.r;
  j["q"] = g.q;
  j["alpha"] = g.alpha;
  j["a"] = g.a;
  j["b"] = g.b;
  j["epsilon"] = g.epsilon;
  j["theta"] = g.theta;
  return j;
}

ModuleGeometry geometry_from_json(const ojson& j) {
  require(j.is_object(), "geometry must be an object");
  ModuleGeometry g = ModuleGeometry::create(
      j.at("r").get<int>(), j.at("q").get<int>(), j.at("alpha").get<double>());
  // Stored derived fields must agree with the recomputed ones.
  require(j.at("a").get<int>() == g.a && j.at("b").get<int>() == g.b,
          "geometry Bezout pair mismatch");
  return g;
}

ojson section_to_json(const GaussPolySection& s) {
  ojson j;
  j["format"] = "gauss-section/1";
  j["geometry"] = geometry_to_json(s.geom);
  ojson comps = ojson::array();
  for (const auto& comp : s.comps) {
    ojson terms = ojson::array();
    for (const auto& t : comp) {
      // The serialized form has no constant in the exponent: fold it into the
      // polynomial. Well-scaled sections stay within double range.
      if (t.gamma_exp.real() > 700.0) {
        throw nct::Error("section term scale exceeds double range");
      }
      const cplx scalar = std::exp(t.gamma_exp);
      ojson poly = ojson::array();
      for (cplx c : t.poly) poly.push_back(cplx_to_json(c * scalar));
      terms.push_back(ojson::array(
          {std::move(poly), cplx_to_json(t.alpha_exp), cplx_to_json(t.beta_exp)}));
    }
    comps.push_back(std::move(terms));
  }
  j["comps"] = std::move(comps);
  return j;
}

GaussPolySection section_from_json(const ojson& j) {
  require(j.is_object() &&
              j.value("format", "") == std::string("gauss-section/1"),
          "unknown section format");
  GaussPolySection s = GaussPolySection::zero(geometry_from_json(j.at("geometry")));
  const ojson& comps = j.at("comps");
  require(comps.is_array() && static_cast<int>(comps.size()) == s.geom.q,
          "component count");
  for (int k = 0; k < s.geom.q; ++k) {
    for (const auto& row : comps[static_cast<std::size_t>(k)]) {
      require(row.is_array() && row.size() == 3, "term shape");
      GaussPolyTerm t;
      for (const auto& c : row[0]) t.poly.push_back(cplx_from_json(c));
      t.alpha_exp = cplx_from_json(row[1]);
      t.beta_exp = cplx_from_json(row[2]);
      s.add_term(k, std::move(t));
    }
  }
  return s;
}

ojson report_to_json(const ProjectionReport& r) {
  ojson j;
  j["trace"] = r.trace;
  j["action"] = r.action;
  j["charge_raw"] = r.charge_raw;
  j["charge_rounded"] = r.charge_rounded;
  j["bp_gap"] = r.bp_gap;
  j["eom_residual"] = r.eom_residual;
  j["sd_residual"] = r.sd_residual;
  j["asd_residual"] = r.asd_residual;
  j["idempotency_residual"] = r.idempotency_residual;
  j["hermiticity_residual"] = r.hermiticity_residual;
  return j;
}

ProjectionReport report_from_json(const ojson& j) {
  ProjectionReport r;
  r.trace = j.at("trace").get<double>();
  r.action = j.at("action").get<double>();
  r.charge_raw = j.at("charge_raw").get<double>();
  r.charge_rounded = j.at("charge_rounded").get<int>();
  r.bp_gap = j.at("bp_gap").get<double>();
  r.eom_residual = j.at("eom_residual").get<double>();
  r.sd_residual = j.at("sd_residual").get<double>();
  r.asd_residual = j.at("asd_residual").get<double>();
  r.idempotency_residual = j.at("idempotency_residual").get<double>();
  r.hermiticity_residual = j.at("hermiticity_residual").get<double>();
  return r;
}

std::string reports_to_csv(const std::vector<ProjectionReport>& reports) {
  std::ostringstream out;
  out << "trace,action,charge_raw,charge_rounded,bp_gap,eom_residual,"
         "sd_residual,asd_residual,idempotency_residual,hermiticity_residual\n";
  for (const auto& r : reports) {
    out << dump_double(r.trace) << ',' << dump_double(r.action) << ','
        << dump_double(r.charge_raw) << ',' << r.charge_rounded << ','
        << dump_double(r.bp_gap) << ',' << dump_double(r.eom_residual) << ','
        << dump_double(r.sd_residual) << ',' << dump_double(r.asd_residual)
        << ',' << dump_double(r.idempotency_residual) << ','
        << dump_double(r.hermiticity_residual) << '\n';
  }
  return out.str();
}

std::string flow_trace_to_csv(const FlowTrace& t) {
  std::ostringstream out;
  out << "step,action,charge_raw,grad_norm,idempotency_residual,step_size,"
         "accepted\n";
  for (const auto& r : t.records) {
    out << r.step << ',' << dump_double(r.action) << ','
        << dump_double(r.charge_raw) << ',' << dump_double(r.grad_norm) << ','
        << dump_double(r.idempotency_residual) << ','
        << dump_double(r.step_size) << ',' << (r.accepted ? 1 : 0) << '\n';
  }
  return out.str();
}

ojson flow_trace_summary(const FlowTrace& t) {
  ojson j;
  switch (t.status) {
    case FlowStatus::Converged: j["status"] = "converged"; break;
    case FlowStatus::BudgetExhausted: j["status"] = "budget_exhausted"; break;
    case FlowStatus::StepFloor: j["status"] = "step_floor"; break;
  }
  j["steps"] = t.records.empty() ? 0 : t.records.back().step;
  int accepted = 0;
  for (const auto& r : t.records) accepted += r.accepted ? 1 : 0;
  j["accepted_steps"] = accepted;
  j["initial_action"] = t.records.empty() ? 0.0 : t.records.front().action;
  j["final_action"] = t.records.empty() ? 0.0 : t.records.back().action;
  j["final_charge_raw"] = t.records.empty() ? 0.0 : t.records.back().charge_raw;
  j["final_grad_norm"] = t.records.empty() ? 0.0 : t.records.back().grad_norm;
  return j;
}

std::string scan_to_csv(const std::vector<ScanRow>& rows) {
  std::ostringstream out;
  const std::size_t q =
      rows.empty() ? 0 : rows.front().reduced.amplitudes.size();
  out << "lambda_re,lambda_im";
  for (std::size_t k = 0; k < q; ++k) {
    out << ",a" << k << "_re,a" << k << "_im";
  }
  out << ",trace,action,charge,bp_gap,sd_residual,asd_residual,idempotency\n";
  for (const auto& row : rows) {
    out << dump_double(row.sample.lambda.real()) << ','
        << dump_double(row.sample.lambda.imag());
    for (cplx a : row.reduced.amplitudes) {
      out << ',' << dump_double(a.real()) << ',' << dump_double(a.imag());
    }
    const auto& r = row.report;
    out << ',' << dump_double(r.trace) << ',' << dump_double(r.action) << ','
        << dump_double(r.charge_raw) << ',' << dump_double(r.bp_gap) << ','
        << dump_double(r.sd_residual) << ',' << dump_double(r.asd_residual)
        << ',' << dump_double(r.idempotency_residual) << '\n';
  }
  return out.str();
}

ojson scan_to_json(const std::vector<ScanRow>& rows) {
  ojson arr = ojson::array();
  for (const auto& row : rows) {
    ojson j;
    j["lambda"] = cplx_to_json(row.sample.lambda);
    ojson amps = ojson::array();
    for (cplx a : row.sample.amplitudes) amps.push_back(cplx_to_json(a));
    j["amplitudes"] = std::move(amps);
    j["lambda_reduced"] = cplx_to_json(row.reduced.lambda);
    j["equivalent_to"] = row.sample.equivalent_to;
    j["distance_to_equivalent"] = row.distance_to_equivalent;
    j["build_ok"] = row.build_ok;
    j["build_error"] = row.build_error;
    j["report"] = report_to_json(row.report);
    arr.push_back(std::move(j));
  }
  return arr;
}

// --- SHA-256 (FIPS 180-4) -------------------------------------------------------

namespace {

constexpr std::array<std::uint32_t, 64> kSha256K = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
    0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
    0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
    0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
    0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
    0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
    0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
    0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};

std::uint32_t rotr(std::uint32_t v, int s) {
  return (v >> s) | (v << (32 - s));
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  std::array<std::uint32_t, 8> h = {0x6a09e667, 0xbb67ae85, 0x3c6ef372,
                                    0xa54ff53a, 0x510e527f, 0x9b05688c,
                                    0x1f83d9ab, 0x5be0cd19};
  std::string msg(data);
  const std::uint64_t bit_len = static_cast<std::uint64_t>(msg.size()) * 8;
  msg.push_back('\x80');
  while (msg.size() % 64 != 56) msg.push_back('\0');
  for (int i = 7; i >= 0; --i) {
    msg.push_back(static_cast<char>((bit_len >> (8 * i)) & 0xff));
  }
  std::array<std::uint32_t, 64> w{};
  for (std::size_t off = 0; off < msg.size(); off += 64) {
    for (int i = 0; i < 16; ++i) {
      w[static_cast<std::size_t>(i)] =
          (static_cast<std::uint32_t>(static_cast<unsigned char>(
               msg[off + 4 * static_cast<std::size_t>(i)])) << 24) |
          (static_cast<std::uint32_t>(static_cast<unsigned char>(
               msg[off + 4 * static_cast<std::size_t>(i) + 1])) << 16) |
          (static_cast<std::uint32_t>(static_cast<unsigned char>(
               msg[off + 4 * static_cast<std::size_t>(i) + 2])) << 8) |
          static_cast<std::uint32_t>(static_cast<unsigned char>(
              msg[off + 4 * static_cast<std::size_t>(i) + 3]));
    }
    for (int i = 16; i < 64; ++i) {
      const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^
                               (w[i - 15] >> 3);
      const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^
                               (w[i - 2] >> 10);
      w[static_cast<std::size_t>(i)] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    auto [a, b, c, d, e, f, g, hh] = h;
    for (int i = 0; i < 64; ++i) {
      const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t t1 =
          hh + s1 + ch + kSha256K[static_cast<std::size_t>(i)] +
          w[static_cast<std::size_t>(i)];
      const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t t2 = s0 + maj;
      hh = g;
      g = f;
      f = e;
      e = d + t1;
      d = c;
      c = b;
      b = a;
      a = t1 + t2;
    }
    h[0] += a; h[1] += b; h[2] += c; h[3] += d;
    h[4] += e; h[5] += f; h[6] += g; h[7] += hh;
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint32_t v : h) {
    for (int i = 7; i >= 0; --i) out.push_back(hex[(v >> (4 * i)) & 0xf]);
  }
  return out;
}

void atomic_write(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + tmp.string() + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace nct
