#include "hfn/costmodel.hpp"

#include <cmath>
#include <sstream>

namespace hfn {

double dram_load_energy_pj(int64_t size_bytes, const EnergyParams& params) {
  if (size_bytes < 0) throw ConfigError("dram_load_energy: negative size");
  const int64_t words = (size_bytes * 8 + 31) / 32;
  return static_cast<double>(words) * params.dram_read_32b_pj;
}

double mult_energy_pj(int64_t mult_ops, const EnergyParams& params) {
  if (mult_ops < 0) throw ConfigError("mult_energy: negative op count");
  return static_cast<double>(mult_ops) * params.fp32_mult_pj;
}

std::string format_energy(double pj) {
  std::ostringstream os;
  os.precision(4);
  if (pj >= 1e9) {
    os << pj / 1e9 << " mJ";
  } else if (pj >= 1e6) {
    os << pj / 1e6 << " uJ";
  } else if (pj >= 1e3) {
    os << pj / 1e3 << " nJ";
  } else {
    os << pj << " pJ";
  }
  std::ostringstream raw;
  raw.precision(5);
  raw << std::scientific << pj;
  return os.str() + " (" + raw.str() + " pJ)";
}

std::vector<EnergyRow> energy_report(const std::vector<std::pair<std::string, int64_t>>& models,
                                     const EnergyParams& params) {
  if (models.empty()) throw ConfigError("energy_report: no models given");
  std::vector<EnergyRow> rows;
  const double baseline = dram_load_energy_pj(models.front().second, params);
  for (const auto& [name, bytes] : models) {
    EnergyRow r;
    r.name = name;
    r.bytes = bytes;
    r.energy_pj = dram_load_energy_pj(bytes, params);
    r.ratio = baseline / r.energy_pj;
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace hfn
