#include <coopsar/cli.hpp>

#include <CLI11.hpp>

#include <iostream>

using namespace coopsar;

int main(int argc, char** argv) {
  CLI::App app{"aerial-ground search and rescue simulator"};
  app.require_subcommand(1);

  RunManifest m;
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string input;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "mission config JSON");
    sub->add_option("--seed", seed, "override the mission seed");
    sub->add_option("--out", out, std::string("output directory (relative paths go under $") + kOutputRootEnv + ")")
        ->capture_default_str();
    sub->add_flag("--validate", m.validate_only, "check inputs only; write nothing");
  };
  CLI::App* mission = app.add_subcommand("mission", "run a full mission and write its artifacts");
  common(mission);
  CLI::App* replay = app.add_subcommand("replay-imu", "run the attitude filter over an IMU CSV log");
  common(replay);
  replay->add_option("csv", input, "IMU log")->required();
  CLI::App* exporter = app.add_subcommand("export-map", "export a map graph as a graymap and landmark list");
  common(exporter);
  exporter->add_option("graph", input, "map.graph file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (!config.empty()) m.config = config;
  for (CLI::App* sub : {mission, replay, exporter}) {
    if (sub->parsed() && sub->count("--seed") > 0) m.seed = seed;
  }
  m.out = out;

  if (mission->parsed()) return cmd_mission(m, std::cout, std::cerr);
  if (replay->parsed()) return cmd_replay_imu(m, input, std::cout, std::cerr);
  return cmd_export_map(m, input, std::cout, std::cerr);
}
