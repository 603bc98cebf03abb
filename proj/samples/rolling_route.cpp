// Runs all four policies on a short synthetic route at one fixed time
// penalty and prints the loss table. Usage: rolling_route [seed] [length_km]
#include <cstdlib>
#include <iostream>
#include <vector>

#include "freewheel/accounting.hpp"
#include "freewheel/config.hpp"

using namespace freewheel;

int main(int argc, char** argv) {
  RunConfig cfg;
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 3;
  cfg.generator.length_m = 1000.0 * (argc > 2 ? std::atof(argv[2]) : 2.0);

  try {
    cfg.validate();
    const DrivingCycle cycle = generate_synthetic_cycle(seed, cfg.generator);

    std::vector<SimulationRecord> runs;
    for (Policy id : kAllPolicies) {
      const VelocityCorridor vc = corridor_for(cfg, id, cycle);
      runs.push_back(run_mpc(cycle, vc, cfg.vehicle, cfg.engine, cfg.mpc_for(id)));
      std::cerr << policy_name(id) << ": " << runs.back().trip_time() << " s, " << runs.back().gear_changes()
                << " gear changes\n";
    }
    // Trip times differ here; the CLI compare command tunes them to match.
    write_comparison_text(std::cout, compare_policies(runs, cfg.engine));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
