#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "singext/suite.hpp"

// Writes the default m = 1 calibration suite as CSV files.
int main(int argc, char** argv) {
  CLI::App app{"Write the default calibration suite"};
  std::string dir = "suite";
  int n = 1024;
  double tube = 0.5;
  app.add_option("dir", dir, "output directory");
  app.add_option("--n", n, "samples per map");
  app.add_option("--tube", tube, "tube radius of the target");
  CLI11_PARSE(app, argc, argv);
  std::filesystem::create_directories(dir);
  for (const auto& m : singext::suite::default_suite(n, tube)) {
    std::string path = (std::filesystem::path(dir) / (m.name + ".csv")).string();
    singext::write_boundary_map_csv(path, m.map);
    std::cout << path << "\n";
  }
  return 0;
}
