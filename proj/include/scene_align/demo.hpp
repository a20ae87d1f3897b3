#pragma once

#include <filesystem>

namespace scene_align {

struct DemoOptions {
  int models_per_category = 5;
  int width = 160;
  int height = 120;
  double pitch_deg = 10.0;  // camera tilt below the horizon
};

// Writes a procedural chair/table library (OBJ + manifest), category stats,
// a camera file and a small-network config that points at them.
void write_demo_assets(const std::filesystem::path& dir, const DemoOptions& opt = {});

}  // namespace scene_align
