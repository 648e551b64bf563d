#pragma once

#include "siscm/dataset.hpp"
#include "siscm/errors.hpp"
#include "siscm/evaluation.hpp"
#include "siscm/io.hpp"
#include "siscm/model_io.hpp"
#include "siscm/models.hpp"
#include "siscm/parallel.hpp"
#include "siscm/partitioning.hpp"
#include "siscm/pipeline.hpp"
#include "siscm/random.hpp"
#include "siscm/scm.hpp"
#include "siscm/synthetic.hpp"
#include "siscm/types.hpp"
