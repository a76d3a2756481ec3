#pragma once

#include <map>
#include <string>
#include <vector>

#include "duostream/tensor.hpp"

namespace duostream {

// Container for named float32 arrays.
//
// Layout (little-endian):
//   magic "TNSR1\0"
//   entries until EOF, each:
//     u16  name length
//     ...  UTF-8 name
//     u8   dtype code (0 = float32)
//     u8   ndim
//     u32  extent per dim
//     ...  row-major float32 payload
//
// Round-trips are bit-exact.
struct TnsrEntry {
  Shape shape;
  std::vector<float> data;
};

using TnsrFile = std::map<std::string, TnsrEntry>;

void tnsr_write(const std::string& path, const TnsrFile& entries);
TnsrFile tnsr_read(const std::string& path);

// Convenience adapters.
TnsrEntry tnsr_from_tensor(const Tensor& t);
Tensor tensor_from_tnsr(const TnsrEntry& e, bool requires_grad = false);

}  // namespace duostream
