#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/sha.h>

#include <json.hpp>

#include "rifl/highdim.hpp"
#include "rifl/lowdim.hpp"

namespace rifl {

inline constexpr int kSchemaVersion = 1;

// univariate: beta and sigma (also the causal path); multivariate: beta and
// Omega; parametric: full slope estimate with its sandwich so the
// coordinator forms global distances; highdim: the two-round protocol.
enum class RecordMode { univariate, multivariate, parametric, highdim };

inline const char* mode_name(RecordMode m) {
  switch (m) {
    case RecordMode::univariate: return "univariate";
    case RecordMode::multivariate: return "multivariate";
    case RecordMode::parametric: return "parametric";
    case RecordMode::highdim: return "highdim";
  }
  return "?";
}

inline RecordMode parse_mode(const std::string& s) {
  if (s == "univariate") return RecordMode::univariate;
  if (s == "multivariate") return RecordMode::multivariate;
  if (s == "parametric") return RecordMode::parametric;
  if (s == "highdim") return RecordMode::highdim;
  throw SchemaError("unknown record mode: " + s);
}

struct PeerComponents {
  double delta = 0.0;
  double V = 0.0;
  double lambda = 0.0;
};

struct SiteRecord {
  int schema_version = kSchemaVersion;
  int site_id = 1;  // 1-based
  long n = 0;
  RecordMode mode = RecordMode::univariate;

  Vector beta_hat;   // length 1 except in multivariate mode
  Matrix omega;      // multivariate only
  double sigma_hat = 0.0;

  Vector theta;      // parametric
  Matrix C;
  Index target = 0;  // coordinate of the reported functional, 0-based in memory

  int round = 1;     // highdim
  double mu_tilde = 0.0;
  Vector theta_tilde;
  double lambda = 0.0;
  double beta_se = 0.0;
  std::map<int, PeerComponents> peers;  // keyed by 1-based peer id
};

namespace detail {

inline void canonical(const nlohmann::json& j, std::string& out) {
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {  // std::map keeps keys sorted
        if (!first) out += ',';
        first = false;
        out += nlohmann::json(it.key()).dump();
        out += ':';
        canonical(it.value(), out);
      }
      out += '}';
      break;
    }
    case nlohmann::json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        canonical(j[i], out);
      }
      out += ']';
      break;
    }
    case nlohmann::json::value_t::number_float: {
      double v = j.get<double>();
      if (!std::isfinite(v)) throw DomainError("record: non-finite number");
      if (v == 0.0) v = 0.0;  // "-0" would parse back as an integer
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      break;
    }
    default: out += j.dump(); break;
  }
}

inline nlohmann::json vec_json(const Vector& v) {
  auto a = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline nlohmann::json mat_json(const Matrix& m) {
  auto a = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

inline Vector json_vec(const nlohmann::json& j) {
  if (!j.is_array()) throw SchemaError("record: expected an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

inline Matrix json_mat(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw SchemaError("record: expected a nonempty matrix");
  const std::size_t r = j.size(), c = j[0].size();
  Matrix m(static_cast<Index>(r), static_cast<Index>(c));
  for (std::size_t i = 0; i < r; ++i) {
    if (j[i].size() != c) throw SchemaError("record: ragged matrix");
    m.row(static_cast<Index>(i)) = json_vec(j[i]).transpose();
  }
  return m;
}

inline void positive(double v, const char* what) {
  if (!(v > 0) || !std::isfinite(v)) throw SchemaError(std::string("record: ") + what + " must be positive");
}

}  // namespace detail

inline std::string canonical_json(const nlohmann::json& j) {
  std::string out;
  detail::canonical(j, out);
  return out;
}

inline std::string sha256_hex(const std::string& s) {
  unsigned char d[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(s.data()), s.size(), d);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : d) {
    out += hex[c >> 4];
    out += hex[c & 15];
  }
  return out;
}

inline nlohmann::json record_payload(const SiteRecord& r) {
  nlohmann::json p;
  p["site_id"] = r.site_id;
  p["n"] = r.n;
  p["mode"] = mode_name(r.mode);
  switch (r.mode) {
    case RecordMode::univariate:
      p["beta_hat"] = r.beta_hat(0);
      p["sigma_hat"] = r.sigma_hat;
      break;
    case RecordMode::multivariate:
      p["beta_hat"] = detail::vec_json(r.beta_hat);
      p["omega_hat"] = detail::mat_json(r.omega);
      break;
    case RecordMode::parametric:
      p["theta_hat"] = detail::vec_json(r.theta);
      p["sandwich"] = detail::mat_json(r.C);
      p["target"] = r.target + 1;
      break;
    case RecordMode::highdim: {
      p["round"] = r.round;
      p["beta_hat"] = r.beta_hat(0);
      p["sigma_hat"] = r.beta_se;
      p["mu_tilde"] = r.mu_tilde;
      p["theta_tilde"] = detail::vec_json(r.theta_tilde);
      p["lambda"] = r.lambda;
      if (r.round == 2) {
        nlohmann::json peers = nlohmann::json::object();
        for (const auto& [id, c] : r.peers)
          peers[std::to_string(id)] = {{"delta", c.delta}, {"V", c.V}, {"lambda", c.lambda}};
        p["peers"] = peers;
      }
      break;
    }
  }
  return p;
}

// {"checksum": sha256(canonical payload), "payload": ..., "schema_version": 1}
inline std::string serialize_record(const SiteRecord& r) {
  nlohmann::json payload = record_payload(r);
  nlohmann::json doc;
  doc["schema_version"] = r.schema_version;
  doc["checksum"] = sha256_hex(canonical_json(payload));
  doc["payload"] = payload;
  return canonical_json(doc) + "\n";
}

inline SiteRecord parse_record(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("record: not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("schema_version") || !doc["schema_version"].is_number_integer())
    throw SchemaError("record: missing schema_version");
  if (doc["schema_version"].get<int>() != kSchemaVersion)
    throw SchemaError("record: unsupported schema_version " + doc["schema_version"].dump());
  if (!doc.contains("payload") || !doc.contains("checksum")) throw SchemaError("record: missing payload or checksum");
  const auto& p = doc["payload"];
  if (sha256_hex(canonical_json(p)) != doc["checksum"].get<std::string>()) throw SchemaError("record: checksum mismatch");

  SiteRecord r;
  try {
    r.site_id = p.at("site_id").get<int>();
    r.n = p.at("n").get<long>();
    r.mode = parse_mode(p.at("mode").get<std::string>());
    switch (r.mode) {
      case RecordMode::univariate:
        r.beta_hat = Vector::Constant(1, p.at("beta_hat").get<double>());
        r.sigma_hat = p.at("sigma_hat").get<double>();
        detail::positive(r.sigma_hat, "sigma_hat");
        break;
      case RecordMode::multivariate:
        r.beta_hat = detail::json_vec(p.at("beta_hat"));
        r.omega = detail::json_mat(p.at("omega_hat"));
        if (r.omega.rows() != r.beta_hat.size() || r.omega.cols() != r.beta_hat.size())
          throw SchemaError("record: omega_hat has the wrong shape");
        for (Index i = 0; i < r.omega.rows(); ++i) detail::positive(r.omega(i, i), "omega_hat diagonal");
        break;
      case RecordMode::parametric:
        r.theta = detail::json_vec(p.at("theta_hat"));
        r.C = detail::json_mat(p.at("sandwich"));
        r.target = p.at("target").get<Index>() - 1;
        if (r.C.rows() != r.theta.size() || r.C.cols() != r.theta.size()) throw SchemaError("record: sandwich has the wrong shape");
        if (r.target < 0 || r.target >= r.theta.size()) throw SchemaError("record: target out of range");
        for (Index i = 0; i < r.C.rows(); ++i) detail::positive(r.C(i, i), "sandwich diagonal");
        break;
      case RecordMode::highdim:
        r.round = p.at("round").get<int>();
        if (r.round != 1 && r.round != 2) throw SchemaError("record: round must be 1 or 2");
        r.beta_hat = Vector::Constant(1, p.at("beta_hat").get<double>());
        r.beta_se = p.at("sigma_hat").get<double>();
        detail::positive(r.beta_se, "sigma_hat");
        r.mu_tilde = p.at("mu_tilde").get<double>();
        r.theta_tilde = detail::json_vec(p.at("theta_tilde"));
        r.lambda = p.at("lambda").get<double>();
        if (r.round == 2) {
          for (auto it = p.at("peers").begin(); it != p.at("peers").end(); ++it) {
            PeerComponents c{it.value().at("delta").get<double>(), it.value().at("V").get<double>(),
                             it.value().at("lambda").get<double>()};
            if (!(c.V >= 0)) throw SchemaError("record: peer V must be nonnegative");
            r.peers[std::stoi(it.key())] = c;
          }
        }
        break;
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("record: malformed payload: ") + e.what());
  }
  if (r.site_id < 1) throw SchemaError("record: site_id must be positive");
  if (r.n < 1) throw SchemaError("record: n must be positive");
  return r;
}

// (path, length) of every array in a serialized record.  A summary-only
// record has the same profile at every n.
inline std::vector<std::pair<std::string, std::size_t>> array_profile(const nlohmann::json& j, const std::string& path = "") {
  std::vector<std::pair<std::string, std::size_t>> out;
  if (j.is_array()) {
    out.emplace_back(path, j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
      auto sub = array_profile(j[i], path + "[]");
      out.insert(out.end(), sub.begin(), sub.end());
    }
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      auto sub = array_profile(it.value(), path + "/" + it.key());
      out.insert(out.end(), sub.begin(), sub.end());
    }
  }
  return out;
}

// Site-side record builders.

inline SiteRecord univariate_record(int site_id, double beta, double sigma, long n) {
  SiteRecord r;
  r.site_id = site_id;
  r.n = n;
  r.mode = RecordMode::univariate;
  r.beta_hat = Vector::Constant(1, beta);
  r.sigma_hat = sigma;
  return r;
}

inline SiteRecord multivariate_record(int site_id, const SiteSummary& s) {
  SiteRecord r;
  r.site_id = site_id;
  r.n = s.n;
  r.mode = RecordMode::multivariate;
  r.beta_hat = s.beta;
  r.omega = s.omega;
  return r;
}

inline SiteRecord parametric_record(int site_id, const ParametricSiteFit& fit, Index target) {
  fit.validate();
  SiteRecord r;
  r.site_id = site_id;
  r.n = fit.n;
  r.mode = RecordMode::parametric;
  r.theta = fit.theta;
  r.C = fit.C;
  r.target = target;
  return r;
}

inline SiteRecord highdim_round1_record(int site_id, const HighDimSite& site) {
  const auto& r1 = site.round1();
  SiteRecord r;
  r.site_id = site_id;
  r.n = r1.n;
  r.mode = RecordMode::highdim;
  r.round = 1;
  r.beta_hat = Vector::Constant(1, r1.beta_hat);
  r.beta_se = r1.beta_se;
  r.mu_tilde = r1.fit.mu_tilde;
  r.theta_tilde = r1.fit.theta_tilde;
  r.lambda = r1.fit.lambda;
  return r;
}

// Round 2 needs every peer's round-1 broadcast.
inline SiteRecord highdim_round2_record(int site_id, const HighDimSite& site, const std::vector<SiteRecord>& peers) {
  SiteRecord r = highdim_round1_record(site_id, site);
  r.round = 2;
  for (const auto& p : peers) {
    if (p.mode != RecordMode::highdim || p.round != 1) throw SchemaError("round 2: peers must be highdim round-1 records");
    if (p.site_id == site_id) continue;
    if (p.theta_tilde.size() != site.fit().theta_tilde.size()) throw SchemaError("round 2: peer dimension mismatch");
    if (r.peers.count(p.site_id)) throw SchemaError("round 2: duplicate peer " + std::to_string(p.site_id));
    auto c = site.components_against(p.theta_tilde);
    r.peers[p.site_id] = {c.delta, c.V, c.lambda};
  }
  if (r.peers.empty()) throw SchemaError("round 2: no peer records");
  return r;
}

// Coordinator: records sorted by site id become sites 0..L-1.
inline RiflInputs inputs_from_records(std::vector<SiteRecord> recs) {
  if (recs.size() < 3) throw DomainError("aggregate: need at least 3 site records");
  std::sort(recs.begin(), recs.end(), [](const SiteRecord& a, const SiteRecord& b) { return a.site_id < b.site_id; });
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].schema_version != recs[0].schema_version) throw SchemaError("aggregate: inconsistent schema versions");
    if (recs[i].mode != recs[0].mode) throw SchemaError("aggregate: records mix modes");
    if (i && recs[i].site_id == recs[i - 1].site_id)
      throw SchemaError("aggregate: duplicate site_id " + std::to_string(recs[i].site_id));
  }
  const int L = static_cast<int>(recs.size());
  RiflInputs in;
  switch (recs[0].mode) {
    case RecordMode::univariate:
      for (int l = 0; l < L; ++l) in.summaries.push_back(SiteSummary::univariate(l, recs[l].beta_hat(0), recs[l].sigma_hat, recs[l].n));
      in.table = local_dissimilarity(in.summaries, false);
      return in;
    case RecordMode::multivariate:
      for (int l = 0; l < L; ++l) in.summaries.push_back(SiteSummary::multivariate(l, recs[l].beta_hat, recs[l].omega, recs[l].n));
      in.table = local_dissimilarity(in.summaries, false);
      return in;
    case RecordMode::parametric: {
      std::vector<ParametricSiteFit> fits;
      for (const auto& r : recs) {
        if (r.target != recs[0].target || r.theta.size() != recs[0].theta.size())
          throw SchemaError("aggregate: parametric records disagree in target or dimension");
        fits.push_back({r.theta, r.C, r.n});
      }
      return lowdim_table(fits, Functional::coordinate(recs[0].target));
    }
    case RecordMode::highdim: {
      std::vector<HighDimRound1> r1;
      std::vector<std::vector<BiasComponents>> comp(static_cast<std::size_t>(L), std::vector<BiasComponents>(L));
      for (int l = 0; l < L; ++l) {
        const auto& r = recs[l];
        if (r.round != 2) throw SchemaError("aggregate: highdim needs round-2 records");
        if (r.peers.size() != static_cast<std::size_t>(L - 1))
          throw SchemaError("aggregate: site " + std::to_string(r.site_id) + " lacks peer components");
        HighDimRound1 x;
        x.n = r.n;
        x.fit.mu_tilde = r.mu_tilde;
        x.fit.theta_tilde = r.theta_tilde;
        x.fit.lambda = r.lambda;
        x.beta_hat = r.beta_hat(0);
        x.beta_se = r.beta_se;
        r1.push_back(std::move(x));
        for (int k = 0; k < L; ++k) {
          if (k == l) continue;
          auto it = r.peers.find(recs[k].site_id);
          if (it == r.peers.end())
            throw SchemaError("aggregate: site " + std::to_string(r.site_id) + " missing peer " + std::to_string(recs[k].site_id));
          comp[l][k].delta = it->second.delta;
          comp[l][k].V = it->second.V;
          comp[l][k].lambda = it->second.lambda;
        }
      }
      return highdim_table(r1, comp);
    }
  }
  return in;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DomainError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DomainError("cannot write " + path);
  f << text;
}

// Delimited numeric table with one header row; comma, tab or space separated.
struct NumericTable {
  std::vector<std::string> header;
  Matrix values;
};

inline NumericTable parse_numeric_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ',' || c == '\t' || c == ' ' || c == '\r') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  };
  NumericTable t;
  while (std::getline(in, line) && split(line).empty()) {
  }
  t.header = split(line);
  if (t.header.empty()) throw DomainError("table: missing header row");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    auto f = split(line);
    if (f.empty()) continue;
    if (f.size() != t.header.size()) throw DomainError("table: row " + std::to_string(rows.size() + 1) + " has the wrong width");
    std::vector<double> r;
    for (const auto& x : f) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(x, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != x.size()) throw DomainError("table: non-numeric entry '" + x + "'");
      r.push_back(v);
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DomainError("table: no data rows");
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return t;
}

inline std::string format_numeric_table(const std::vector<std::string>& header, const Matrix& values) {
  std::string out;
  for (std::size_t j = 0; j < header.size(); ++j) out += (j ? "," : "") + header[j];
  out += '\n';
  char buf[40];
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", values(i, j));
      out += (j ? "," : "") + std::string(buf);
    }
    out += '\n';
  }
  return out;
}

}  // namespace rifl
