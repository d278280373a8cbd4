//! Train, encode, and evaluate in one call.

use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{default_ks, evaluate, EvalReport};
use crate::index::CodeTable;
use crate::model::ModelParams;
use crate::trainer::{encode_queries, encode_with_ids, train, TrainConfig, TrainOutcome};

/// Which items form the retrieval database for held-out queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatabaseChoice {
    /// Training items only.
    #[default]
    Train,
    /// Training items followed by the queries; each query skips itself.
    All,
}

impl FromStr for DatabaseChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(DatabaseChoice::Train),
            "all" => Ok(DatabaseChoice::All),
            other => Err(Error::Config(format!(
                "database must be train or all, got {other:?}"
            ))),
        }
    }
}

/// Builds the database table and evaluates every query against it.
pub fn evaluate_model(
    params: &ModelParams,
    database: &Dataset,
    queries: &Dataset,
    choice: DatabaseChoice,
) -> Result<(CodeTable, EvalReport)> {
    let table = encode_with_ids(params, database, 0)?;
    evaluate_against_table(params, table, queries, choice)
}

/// Evaluates `queries` against an already encoded database. With
/// [`DatabaseChoice::All`] the encoded queries are appended to the table first.
pub fn evaluate_against_table(
    params: &ModelParams,
    mut table: CodeTable,
    queries: &Dataset,
    choice: DatabaseChoice,
) -> Result<(CodeTable, EvalReport)> {
    let exclude_offset = match choice {
        DatabaseChoice::Train => None,
        DatabaseChoice::All => {
            let offset = table.len();
            let first_id = table.ids().iter().max().map_or(0, |m| m + 1);
            let extra = encode_with_ids(params, queries, first_id)?;
            for i in 0..extra.len() {
                table.push(
                    &extra.code(i),
                    extra.ids()[i],
                    extra.label(i),
                    extra.predicted()[i],
                )?;
            }
            Some(offset)
        }
    };
    let encoded = encode_queries(params, queries, exclude_offset)?;
    let depth = match choice {
        DatabaseChoice::Train => table.len(),
        DatabaseChoice::All => table.len().saturating_sub(1),
    };
    let report = evaluate(&encoded, &table, &default_ks(depth))?;
    Ok((table, report))
}

pub struct ExperimentResult {
    pub outcome: TrainOutcome,
    pub table: CodeTable,
    pub report: EvalReport,
}

pub fn run_experiment(
    train_set: &Dataset,
    query_set: &Dataset,
    config: &TrainConfig,
    choice: DatabaseChoice,
) -> Result<ExperimentResult> {
    let outcome = train(train_set, config)?;
    let (table, report) = evaluate_model(&outcome.params, train_set, query_set, choice)?;
    Ok(ExperimentResult {
        outcome,
        table,
        report,
    })
}
