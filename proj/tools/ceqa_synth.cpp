// Writes a clustered synthetic eventuality graph as a TSV edge list.

#include <CLI11.hpp>

#include <iostream>

#include "ceqa/kg_store.hpp"

int main(int argc, char** argv) {
  CLI::App app{"write a synthetic KG edge list"};
  app.option_defaults()->always_capture_default();
  ceqa::SyntheticGraphConfig cfg;
  std::string out;
  app.add_option("--vertices", cfg.num_vertices)->check(CLI::PositiveNumber);
  app.add_option("--edges", cfg.num_edges);
  app.add_option("--clusters", cfg.num_clusters)->check(CLI::PositiveNumber);
  app.add_option("--fanout", cfg.max_fanout, "max tails per (head, relation) pick")->check(CLI::PositiveNumber);
  app.add_option("--tail-skew", cfg.tail_skew, "hub exponent; 1 is uniform")->check(CLI::Range(1.0, 10.0));
  app.add_option("--seed", cfg.seed);
  app.add_option("--out", out)->required();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    auto g = ceqa::make_synthetic_graph(cfg);
    ceqa::save_graph(out, g);
    std::cout << g.num_vertices() << " vertices, " << g.num_edges() << " edges\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
