#ifndef ICONIC_ICONIC_HPP
#define ICONIC_ICONIC_HPP

// Umbrella header.
#include "iconic/core.hpp"
#include "iconic/csv_io.hpp"
#include "iconic/eval.hpp"
#include "iconic/mlp.hpp"
#include "iconic/model_io.hpp"
#include "iconic/pairs.hpp"
#include "iconic/pooling.hpp"
#include "iconic/synthgen.hpp"
#include "iconic/trainer.hpp"

#endif  // ICONIC_ICONIC_HPP
