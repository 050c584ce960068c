// Picks the default stance radius: the foot placement at which the tripod
// gait's worst-case joint torque at the nominal body mass leaves the target
// fraction of stall torque in reserve. Prints the resulting payload table
// and optionally writes the full hexapod config.

#include <coopsar/hexapod.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace coopsar;

int main(int argc, char** argv) {
  CLI::App app{"hexapod stance calibration"};
  double target_margin = 0.255;
  double lo = 0.10, hi = 0.19;
  std::string out;
  app.add_option("--margin", target_margin, "tripod reserve as a fraction of stall torque")->check(CLI::Range(0.0, 0.99));
  app.add_option("--min-radius", lo, "search lower bound (m)");
  app.add_option("--max-radius", hi, "search upper bound (m)");
  app.add_option("--out", out, "write the calibrated config JSON here");
  CLI11_PARSE(app, argc, argv);

  HexapodConfig cfg = default_hexapod_config();
  const GaitSpec tripod = gait_spec(GaitName::Tripod);
  const double target = cfg.stall_torque * (1.0 - target_margin);
  auto torque_at = [&](double r) {
    cfg.stance_radius = r;
    return gait_torque_estimate(cfg, tripod, 0.0).max();
  };
  if ((torque_at(lo) - target) * (torque_at(hi) - target) > 0.0) {
    std::cerr << "target torque not bracketed by the radius range\n";
    return 1;
  }
  // Torque grows with the lever arm, so the crossing is unique.
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (torque_at(mid) < target ? lo : hi) = mid;
  }
  cfg.stance_radius = std::round(0.5 * (lo + hi) * 1e4) / 1e4;

  std::printf("stance_radius %.4f m (target tripod torque %.4f N*m)\n", cfg.stance_radius, target);
  std::printf("%-7s %10s %10s %12s\n", "gait", "torque", "margin%", "payload_kg");
  for (GaitName g : {GaitName::Wave, GaitName::Ripple, GaitName::Amble, GaitName::Tripod}) {
    const double tau = gait_torque_estimate(cfg, gait_spec(g), 0.0).max();
    std::printf("%-7s %10.4f %10.2f %12.4f\n", to_string(g), tau, 100.0 * (1.0 - tau / cfg.stall_torque),
                max_payload(cfg, gait_spec(g)));
  }
  if (!out.empty()) {
    std::ofstream f(out);
    write_hexapod_config(f, cfg);
    if (!f) {
      std::cerr << "cannot write " << out << '\n';
      return 1;
    }
  }
  return 0;
}
