#pragma once

#include <array>
#include <vector>

namespace iganet {

struct Joint2 {
  double x = 0.0, y = 0.0;
};

struct Joint3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

using Pose2d = std::vector<Joint2>;  // J entries, normalized image coords
using Pose3d = std::vector<Joint3>;  // J entries, millimeters, root-relative

inline bool operator==(const Joint2& a, const Joint2& b) { return a.x == b.x && a.y == b.y; }
inline bool operator==(const Joint3& a, const Joint3& b) {
  return a.x == b.x && a.y == b.y && a.z == b.z;
}

}  // namespace iganet
