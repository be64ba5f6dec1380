#pragma once

namespace hofmat {

/// Worker count: `requested` if positive, else HOFMAT_THREADS, else the
/// OpenMP default.
int resolve_threads(int requested);

}  // namespace hofmat
