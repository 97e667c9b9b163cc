#include "tricharge/output.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/core.h>
#include <openssl/evp.h>

#include "json.hpp"

namespace tricharge {

namespace {

using json = nlohmann::ordered_json;

std::string csv_text(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
  out << content;
  out.close();
  if (!out) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // drops the sign of -0
  return fmt::format("{:.10g}", v);
}

std::string sweep_csv(const SweepResults& results) {
  std::string out = "param_value,P_star_kw,alpha_star,Pi_up,Pi_mid";
  for (int id : results.hub_ids) out += fmt::format(",L_{}_kwh", id);
  for (int id : results.hub_ids) out += fmt::format(",Ltilde_{}", id);
  out += ",grid_cost,revenue,method,converged,iterations,status\n";
  const std::size_t n = results.hub_ids.size();
  for (const SweepRow& r : results.rows) {
    out += fmt::format("{},{},{},{},{}", format_number(r.param_value), format_number(r.threshold_kw),
                       format_number(r.alpha), format_number(r.pi_up), format_number(r.pi_mid));
    for (std::size_t i = 0; i < n; ++i) out += "," + format_number(i < r.needs.size() ? r.needs[i] : NAN);
    for (std::size_t i = 0; i < n; ++i)
      out += "," + format_number(i < r.normalized_needs.size() ? r.normalized_needs[i] : NAN);
    out += fmt::format(",{},{},{},{},{},{}\n", format_number(r.grid_cost), format_number(r.revenue),
                       to_string(r.method), r.converged ? 1 : 0, r.iterations, csv_text(r.status));
  }
  return out;
}

std::string trace_csv(std::span<const TraceRow> trace) {
  std::string out = "outer_iter,phase,P,alpha,Pi_mid,Pi_up,accepted,feasible\n";
  for (const TraceRow& t : trace)
    out += fmt::format("{},{},{},{},{},{},{},{}\n", t.outer_iteration, t.phase, format_number(t.threshold_kw),
                       format_number(t.alpha), format_number(t.pi_mid), format_number(t.pi_up), t.accepted ? 1 : 0,
                       t.feasible ? 1 : 0);
  return out;
}

std::string path_flows_csv(const EquilibriumModel& model, const FlowAssignment& flows, const CsoPricing& pricing) {
  const std::vector<double> costs = path_costs(model, flows, pricing);
  std::string out = "class,path_id,flow,cost\n";
  for (const GlobalPath& p : model.paths()) {
    std::string cls(to_string(p.kind));
    if (p.decision == ChargeDecision::later) cls += "_later";
    out += fmt::format("{},{},{},{}\n", cls, p.id, format_number(flows.path_flows[p.id]), format_number(costs[p.id]));
  }
  return out;
}

std::string hub_needs_csv(std::span<const int> hub_ids, std::span<const double> needs) {
  if (hub_ids.size() != needs.size()) throw std::invalid_argument("hub ids and needs differ in length");
  std::string out = "hub,L_i_kwh\n";
  for (std::size_t i = 0; i < needs.size(); ++i) out += fmt::format("{},{}\n", hub_ids[i], format_number(needs[i]));
  return out;
}

std::string payoff_csv(std::span<const PayoffBreakdown> points, std::span<const int> hub_ids) {
  std::string out = "alpha,P,hub,R_i,sum_C_i,Pi_mid,grid_term,Pi_up\n";
  for (const PayoffBreakdown& b : points)
    for (const HubPayoff& h : b.hubs)
      out += fmt::format("{},{},{},{},{},{},{},{}\n", format_number(b.alpha), format_number(b.threshold_kw),
                         hub_ids[h.hub], format_number(h.revenue), format_number(h.total_supply_cost),
                         format_number(b.pi_mid), format_number(b.grid_term), format_number(b.pi_up));
  return out;
}

std::string profiles_csv(std::span<const int> hub_ids, const HubEconomics& hubs, std::span<const ProfileSet> sets) {
  std::string out = "hub,slot,ell_star_kwh,ell_nonflex_kwh,method\n";
  for (const ProfileSet& set : sets) {
    if (set.charging_kwh.size() != hub_ids.size()) throw std::invalid_argument("profile set has the wrong hub count");
    for (std::size_t h = 0; h < hub_ids.size(); ++h) {
      const auto nonflex = hubs.profiles[h].original();
      for (std::size_t t = 0; t < set.charging_kwh[h].size(); ++t)
        out += fmt::format("{},{},{},{},{}\n", hub_ids[h], t + 1, format_number(set.charging_kwh[h][t]),
                           format_number(nonflex[t]), set.method);
    }
  }
  return out;
}

std::string baseline_csv(const SweepResults& results) {
  std::string out = "method,alpha_tilde,X_e,grid_cost,charging_revenue,converged,iterations\n";
  for (const SweepRow& r : results.rows)
    out += fmt::format("{},{},{},{},{},{},{}\n", to_string(r.method), format_number(r.alpha_tilde),
                       format_number(r.ev_share), format_number(r.grid_cost), format_number(r.revenue),
                       r.converged ? 1 : 0, r.iterations);
  return out;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::string out;
  for (unsigned int i = 0; i < length; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::filesystem::path emit_outputs(const std::filesystem::path& out_dir, const std::vector<OutputFile>& files,
                                   const ScenarioConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));
  json manifest;
  manifest["tool"] = "tricharge";
  manifest["version"] = kToolVersion;
  manifest["seed"] = config.seed;
  manifest["config_sha256"] = sha256_hex(scenario_config_json(config));
  json listed = json::array();
  for (const OutputFile& f : files) {
    if (f.name == "manifest.json") throw std::invalid_argument("manifest.json is reserved");
    write_file(out_dir / f.name, f.content);
    listed.push_back({{"name", f.name}, {"bytes", f.content.size()}, {"sha256", sha256_hex(f.content)}});
  }
  manifest["files"] = std::move(listed);
  const auto path = out_dir / "manifest.json";
  write_file(path, manifest.dump(2) + "\n");
  return path;
}

}  // namespace tricharge
