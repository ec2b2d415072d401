#pragma once

#include "toolweave/dependency.hpp"
#include "toolweave/error.hpp"
#include "toolweave/evaluation.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/graph.hpp"
#include "toolweave/io.hpp"
#include "toolweave/pipeline.hpp"
#include "toolweave/plan.hpp"
#include "toolweave/ppr.hpp"
#include "toolweave/retrieval.hpp"
#include "toolweave/schema.hpp"
#include "toolweave/stub_rules.hpp"
#include "toolweave/synthetic.hpp"
#include "toolweave/text.hpp"
