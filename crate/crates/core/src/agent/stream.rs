use super::{repair, Agent, AgentError, AgentEvent};
use crate::model::{Context, Message};
use crate::providers::{EventStream, Response, StreamAggregator, StreamEvent};

/// Pull-based text deltas of one reply. Dropping the stream before it ends
/// leaves the agent's context untouched.
pub struct TextStream<'a> {
    agent: &'a mut Agent,
    user: Option<Message>,
    events: EventStream,
    aggregator: Option<StreamAggregator>,
    response: Option<Response>,
}

impl<'a> TextStream<'a> {
    pub(super) fn start(agent: &'a mut Agent, text: &str) -> Result<Self, AgentError> {
        let user = Message::user(text);
        let mut request: Context = agent.context.clone();
        repair(&mut request, agent.system_prompt.as_deref())?;
        request.add_message(user.clone())?;
        let events = agent.provider.stream(&request, &agent.tools.specs())?;
        let aggregator = Some(StreamAggregator::new(agent.provider.model().dialect));
        Ok(TextStream {
            agent,
            user: Some(user),
            events,
            aggregator,
            response: None,
        })
    }

    /// The aggregated reply, once the stream has been consumed.
    pub fn response(&self) -> Option<&Response> {
        self.response.as_ref()
    }

    fn finalize(&mut self) -> Result<(), AgentError> {
        let Some(agg) = self.aggregator.take() else {
            return Ok(());
        };
        let response = agg.finish(self.agent.provider.model(), self.agent.provider.pricing())?;
        let user = self.user.take().expect("user message present until finalized");
        self.agent.prepare()?;
        self.agent.context.add_message(user)?;
        self.agent.context.add_message(response.message.clone())?;
        let total_cost = self.agent.context.total_cost();
        self.agent.emit(AgentEvent::Usage {
            usage: response.usage,
            total_cost,
        });
        self.response = Some(response);
        Ok(())
    }
}

impl Iterator for TextStream<'_> {
    type Item = Result<String, AgentError>;

    fn next(&mut self) -> Option<Self::Item> {
        let agg = self.aggregator.as_mut()?;
        loop {
            match self.events.next() {
                Some(Ok(ev)) => {
                    agg.push(&ev);
                    if let StreamEvent::TextDelta { text } = ev {
                        return Some(Ok(text));
                    }
                }
                Some(Err(e)) => {
                    self.aggregator = None;
                    return Some(Err(e.into()));
                }
                None => return self.finalize().err().map(Err),
            }
        }
    }
}
