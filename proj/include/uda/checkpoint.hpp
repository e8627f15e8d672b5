#ifndef UDA_CHECKPOINT_HPP
#define UDA_CHECKPOINT_HPP

#include <cstdint>
#include <string>

#include "uda/model.hpp"

namespace uda {

// Binary checkpoint layout (little-endian):
//   bytes 0-3   magic "UDAC"
//   byte  4     format version (1)
//   bytes 5-12  vocabulary hash (uint64)
//   4 x int32   vocab_size, dim, num_classes, num_tags
//   parameter arrays as float64, in ModelParameters::for_each_array order
void save_checkpoint(const ModelParameters& params, std::uint64_t vocab_hash,
                     const std::string& path);

struct Checkpoint {
    ModelParameters params;
    std::uint64_t vocab_hash = 0;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace uda

#endif
