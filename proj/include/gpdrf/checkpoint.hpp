#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpdrf/data_io.hpp"
#include "gpdrf/model.hpp"

namespace gpdrf::ckpt {

// Everything needed to resume predicting: the full model state (all
// variational and kernel parameters, pseudo-inputs, spectra option, seeds)
// plus the feature standardizer fitted on the training split, when one was
// used, so test data gets the same affine map. For sequence classifiers
// class_names records the training label order, since class indices are
// assigned by first appearance and a test file may list labels differently.
struct Checkpoint {
  model::GpDrfModel model;
  std::uint64_t train_seed = 0;
  bool has_standardizer = false;
  data::Standardizer standardizer;
  std::vector<std::string> class_names;
};

// Binary container: magic "GPDRFCKP", a u32 format version, then named
// blocks (length-prefixed name, kind tag, payload) in a fixed order.
// Integers and float bit patterns are little-endian; floats are 64-bit
// IEEE. The fixed order makes equal states serialize byte-identically.
std::string serialize(const Checkpoint& c);

// Strict reader: bad magic, an unsupported version, a block out of order,
// or truncated or trailing bytes all raise CheckpointError naming the spot.
// `origin` is only used in messages.
Checkpoint deserialize(const std::string& bytes, const std::string& origin);

void save(const std::string& path, const Checkpoint& c);
Checkpoint load(const std::string& path);

}  // namespace gpdrf::ckpt
