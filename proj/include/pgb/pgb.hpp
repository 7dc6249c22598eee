#pragma once

#include "pgb/archive.hpp"
#include "pgb/compress.hpp"
#include "pgb/errors.hpp"
#include "pgb/grouping.hpp"
#include "pgb/importance.hpp"
#include "pgb/infer.hpp"
#include "pgb/model.hpp"
#include "pgb/model_io.hpp"
#include "pgb/parallel.hpp"
#include "pgb/permute.hpp"
#include "pgb/synthetic.hpp"
#include "pgb/tensor.hpp"
