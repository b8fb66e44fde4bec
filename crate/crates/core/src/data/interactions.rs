use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;

use super::types::{ActionEvent, ActionType, Interaction};
use crate::error::{Error, Result};

/// Reduce an action log to one-way interactions.
///
/// Events are ordered by timestamp, ties by input position. Each pair of
/// users yields at most one interaction, owned by whoever visited first. The
/// interaction records whether that sender messaged before the recipient did
/// anything visible towards the sender; recipient visits are invisible and do
/// not end it. A sender block also ends it.
///
/// Any non-visit action `a -> b` without an earlier visit `a -> b` is a
/// malformed stream.
pub fn filter_one_way(events: &[ActionEvent]) -> Result<Vec<Interaction>> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| events[i].timestamp);

    let mut visited: HashSet<(&str, &str)> = HashSet::new();
    let mut pairs: BTreeMap<(&str, &str), Vec<&ActionEvent>> = BTreeMap::new();
    for &i in &order {
        let e = &events[i];
        if e.sender_id == e.recipient_id {
            return Err(Error::Data(format!("self-directed event by {}", e.sender_id)));
        }
        let directed = (e.sender_id.as_str(), e.recipient_id.as_str());
        if e.action == ActionType::Visit {
            visited.insert(directed);
        } else if !visited.contains(&directed) {
            return Err(Error::Data(format!(
                "{} by {} to {} at t={} without a prior visit",
                e.action, e.sender_id, e.recipient_id, e.timestamp
            )));
        }
        let key = if directed.0 < directed.1 {
            directed
        } else {
            (directed.1, directed.0)
        };
        pairs.entry(key).or_default().push(e);
    }

    let mut out: Vec<Interaction> = pairs
        .into_par_iter()
        .map(|(_, evs)| replay_pair(&evs))
        .collect();
    out.sort();
    Ok(out)
}

fn replay_pair(evs: &[&ActionEvent]) -> Interaction {
    // The stream check guarantees the first event of a pair is a visit.
    let first = evs[0];
    let sender = first.sender_id.as_str();
    let mut message_sent = false;
    for e in evs {
        let from_sender = e.sender_id == sender;
        match (from_sender, e.action) {
            (true, ActionType::Message) => message_sent = true,
            (true, ActionType::Block) => break,
            (true, _) => {}
            (false, ActionType::Visit) => {}
            (false, _) => break,
        }
    }
    Interaction {
        sender_id: sender.to_string(),
        recipient_id: first.recipient_id.clone(),
        message_sent,
        first_visit_time: first.timestamp,
    }
}
