#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hfn/model_plan.hpp"

namespace hfn {

// Idealized 45 nm inference accelerator: parameter loading dominates, one DRAM
// read per 32-bit word of model storage.
struct EnergyParams {
  double dram_read_32b_pj = 640.0;
  double fp32_mult_pj = 3.7;
  double fp16_mult_dram_ratio = 291.0;  // 16-bit multiply is this factor below a DRAM read
  std::string technology = "45nm CMOS";
};

double dram_load_energy_pj(int64_t size_bytes, const EnergyParams& params = {});
double mult_energy_pj(int64_t mult_ops, const EnergyParams& params = {});

// "15.17 mJ (1.5171e+10 pJ)" -- human scale plus the raw picojoule value.
std::string format_energy(double pj);

struct EnergyRow {
  std::string name;
  int64_t bytes = 0;
  double energy_pj = 0.0;
  double ratio = 1.0;  // baseline energy / this energy
};

// First entry is the baseline; energy is linear in 32-bit words, so the ratio
// column equals the size ratio exactly.
std::vector<EnergyRow> energy_report(const std::vector<std::pair<std::string, int64_t>>& models,
                                     const EnergyParams& params = {});

}  // namespace hfn
