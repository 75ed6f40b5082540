#pragma once

#include "scenefit/body.hpp"
#include "scenefit/core.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace scenefit::io {

// Motion JSON: {"T": [[x,y,z],...], "theta": [[[ax,ay,az] x24],...],
//               "beta": [10 numbers], "frame_rate": hz, "frame": "WORLD"}
std::string motion_to_json(const MotionSequence& motion);
MotionSequence motion_from_json(std::string_view text);

// Transform JSON: {"matrix": [[4 numbers] x4] row-major, "source_frame": ..., "target_frame": ...}
std::string transform_to_json(const RigidTransform& transform);
RigidTransform transform_from_json(std::string_view text);

std::string template_to_json(const body::BodyTemplate& tmpl);
body::BodyTemplate template_from_json(std::string_view text);

// LiDAR trajectory JSON: {"positions": [[x,y,z],...], "frame": "WORLD"}, one
// sensor origin per motion frame.
std::string trajectory_to_json(const Points& positions, Frame frame = Frame::kWorld);
Points trajectory_from_json(std::string_view text, Frame expected = Frame::kWorld);

enum class PlyFormat { kAscii, kBinary };

// PLY: vertex(x, y, z[, nx, ny, nz]) and face(vertex_indices). Cloud metadata
// (frame, label, timestamp) travels in header comments.
std::string cloud_to_ply(const PointCloudFrame& cloud, PlyFormat format = PlyFormat::kBinary);
PointCloudFrame cloud_from_ply(std::string_view bytes);
std::string mesh_to_ply(const SceneMesh& mesh, PlyFormat format = PlyFormat::kBinary);
SceneMesh mesh_from_ply(std::string_view bytes);

/// Reads a whole file; throws Error naming the path when it cannot be opened.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

MotionSequence read_motion(const std::filesystem::path& path);
void write_motion(const std::filesystem::path& path, const MotionSequence& motion);
RigidTransform read_transform(const std::filesystem::path& path);
void write_transform(const std::filesystem::path& path, const RigidTransform& transform);
body::BodyTemplate read_template(const std::filesystem::path& path);
void write_template(const std::filesystem::path& path, const body::BodyTemplate& tmpl);
Points read_trajectory(const std::filesystem::path& path, Frame expected = Frame::kWorld);
void write_trajectory(const std::filesystem::path& path, const Points& positions, Frame frame = Frame::kWorld);
PointCloudFrame read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, const PointCloudFrame& cloud,
                 PlyFormat format = PlyFormat::kBinary);
SceneMesh read_mesh(const std::filesystem::path& path);
void write_mesh(const std::filesystem::path& path, const SceneMesh& mesh,
                PlyFormat format = PlyFormat::kBinary);

/// Dotted/indexed path of the innermost JSON value open at byte `offset`
/// (e.g. "theta[2][5]"); empty at top level.
std::string json_path_at(std::string_view text, std::size_t offset);

/// 64-bit FNV-1a, used for manifest input hashes.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace scenefit::io
