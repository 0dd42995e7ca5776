#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "floquet/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Floquet-Bloch numerical laboratory"};
  app.require_subcommand(1, 1);

  floquet::RunOptions opt;
  std::uint64_t seed = 0;
  const std::map<std::string, std::string> about{
      {"bands", "band structure along the reduced grid (CSV)"},
      {"degeneracy", "classify the target point: velocity, Hessian or Dirac cone (JSON)"},
      {"monodromy", "per-fiber Floquet exponents (CSV)"},
      {"enclosure", "exponent enclosure g0 of the effective model (JSON)"},
      {"invariance", "invariance residuals against epsilon (CSV + JSON)"},
      {"effective-validate", "monodromy vs effective model error table (CSV + JSON)"},
      {"selftest", "built-in invariant suite (JSON)"},
  };
  for (const auto& name : floquet::subcommands()) {
    auto it = about.find(name);
    CLI::App* sub = app.add_subcommand(name, it == about.end() ? std::string{} : it->second);
    auto* cfg = sub->add_option("--config", opt.config_path, "experiment config (JSON)");
    if (name != "selftest") cfg->required();
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << nlohmann::json{{"error", {{"kind", "config"}, {"code", "bad_arguments"}, {"message", e.what()}}}}.dump()
              << '\n';
    return 2;
  }

  opt.subcommand = app.get_subcommands().front()->get_name();
  if (app.get_subcommands().front()->count("--seed")) opt.seed = seed;

  try {
    std::cout << floquet::run(opt).dump(2) << '\n';
    return 0;
  } catch (const floquet::Error& e) {
    std::cerr << floquet::error_json(e).dump() << '\n';
    return floquet::exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", "config"}, {"code", "schema"}, {"message", e.what()}}}}.dump()
              << '\n';
    return 2;
  } catch (const std::bad_alloc&) {
    std::cerr << R"({"error":{"kind":"resource","code":"out_of_memory","message":"allocation failed"}})" << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", "numeric"}, {"code", "internal"}, {"message", e.what()}}}}.dump()
              << '\n';
    return 3;
  }
}
