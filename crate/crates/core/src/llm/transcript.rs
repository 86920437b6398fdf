//! Append-only natural-language record of a proxy's interactions.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ProxyQuery,
    PersonAnswer,
    AuctioneerMsg,
    ProxyBid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Value,
    Demand,
    Natural,
    Equivalence,
    Engine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub role: Role,
    pub channel: Channel,
    pub text: String,
    pub timestamp: u64,
}

impl Event {
    fn render(&self) -> String {
        let speaker = match self.role {
            Role::ProxyQuery => "Proxy",
            Role::PersonAnswer => "Person",
            Role::AuctioneerMsg => "Auctioneer",
            Role::ProxyBid => "Proxy bid",
        };
        let kind = match self.channel {
            Channel::Value => " (value query)",
            Channel::Demand => " (demand query)",
            Channel::Natural => " (question)",
            Channel::Equivalence => " (equivalence query)",
            Channel::Engine => "",
        };
        format!("{speaker}{kind}: {}\n", self.text)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    events: Vec<Event>,
}

impl Transcript {
    pub fn new() -> Self {
        Transcript::default()
    }

    pub fn push(&mut self, role: Role, channel: Channel, text: impl Into<String>) {
        let timestamp = self.events.len() as u64;
        self.events.push(Event { role, channel, text: text.into(), timestamp });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Every event, one line each.
    pub fn history(&self) -> String {
        self.events.iter().map(Event::render).collect()
    }

    /// Natural-language questions and answers only.
    pub fn primary_history(&self) -> String {
        self.events
            .iter()
            .filter(|e| e.channel == Channel::Natural)
            .map(Event::render)
            .collect()
    }
}
