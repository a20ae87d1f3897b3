#include <iostream>

#include <CLI11.hpp>

#include "scene_align/demo.hpp"
#include "scene_align/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a procedural demo library, stats, camera and config"};
  std::string out;
  scene_align::DemoOptions opt;
  app.add_option("-o,--out", out, "output directory")->required();
  app.add_option("--models", opt.models_per_category, "models per category")->check(CLI::PositiveNumber);
  app.add_option("--width", opt.width, "image width")->check(CLI::PositiveNumber);
  app.add_option("--height", opt.height, "image height")->check(CLI::PositiveNumber);
  app.add_option("--pitch", opt.pitch_deg, "camera tilt below the horizon, degrees");
  CLI11_PARSE(app, argc, argv);
  try {
    scene_align::write_demo_assets(out, opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
