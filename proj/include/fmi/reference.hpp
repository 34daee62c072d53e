// Serial single-process reference for every collective. Kept separate from
// the distributed algorithms so it can serve as their oracle.
#pragma once

#include <span>
#include <vector>

#include "fmi/core.hpp"

namespace fmi::reference {

/// Rank-order concatenation.
DataBuffer gather(std::span<const DataBuffer> inputs);
/// Equal slices, one per rank. ProtocolViolation if count % n != 0.
std::vector<DataBuffer> scatter(const DataBuffer& root_buf, int n);
/// Left fold in ascending rank order.
DataBuffer reduce(std::span<const DataBuffer> inputs, const ReductionOp& op);
/// Inclusive prefix folds.
std::vector<DataBuffer> scan(std::span<const DataBuffer> inputs, const ReductionOp& op);

}  // namespace fmi::reference
