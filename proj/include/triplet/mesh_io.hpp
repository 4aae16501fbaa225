#pragma once

#include <string>

#include "triplet/scene.hpp"

namespace triplet {

enum class MeshFormat { OBJ, PLY };

// OBJ writes positions + normals with a .props.tsv material sidecar;
// PLY is binary little-endian with per-vertex float material columns.
// Both round-trip through the matching importer.
void export_mesh(const TripletScene& mesh, MeshFormat format, const std::string& path);

TripletScene import_mesh(MeshFormat format, const std::string& path);

std::string props_sidecar_path(const std::string& obj_path);

}  // namespace triplet
