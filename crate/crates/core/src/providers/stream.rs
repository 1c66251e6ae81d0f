use std::collections::{BTreeMap, VecDeque};
use std::io::BufRead;

use rand::Rng;

use super::anthropic::EventDecoder;
use super::openai::{parse_arguments, ChunkDecoder};
use super::sse::SseReader;
use super::{ModelRef, PricingTable, ProviderError, Response, StopReason, UsageMode, WireDialect};
use crate::model::{ToolCall, Usage};

/// A normalized streaming increment.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    TextDelta {
        text: String,
    },
    /// Fragment of tool call number `index`. The first fragment of a call
    /// usually carries its id and name.
    ToolCallDelta {
        index: usize,
        id: Option<String>,
        name: Option<String>,
        args_fragment: String,
    },
    UsageDelta {
        input_tokens: Option<u64>,
        output_tokens: Option<u64>,
    },
    Done {
        stop_reason: StopReason,
    },
}

enum Decoder {
    OpenAi(ChunkDecoder),
    Anthropic(EventDecoder),
}

/// Pull-based parser turning an SSE byte stream into [`StreamEvent`]s.
/// Yields exactly one `Done`, or a `TruncatedStream` error if the input ends
/// first.
pub struct StreamParser<R> {
    frames: SseReader<R>,
    decoder: Decoder,
    pending: VecDeque<StreamEvent>,
    finished: bool,
}

pub fn parse_stream<R: BufRead>(reader: R, dialect: WireDialect) -> StreamParser<R> {
    let decoder = match dialect {
        WireDialect::OpenAiChat => Decoder::OpenAi(ChunkDecoder::default()),
        WireDialect::AnthropicMessages => Decoder::Anthropic(EventDecoder::default()),
    };
    StreamParser {
        frames: SseReader::new(reader),
        decoder,
        pending: VecDeque::new(),
        finished: false,
    }
}

impl<R: BufRead> Iterator for StreamParser<R> {
    type Item = Result<StreamEvent, ProviderError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.finished {
                return None;
            }
            if let Some(ev) = self.pending.pop_front() {
                if matches!(ev, StreamEvent::Done { .. }) {
                    self.finished = true;
                    self.pending.clear();
                }
                return Some(Ok(ev));
            }
            let frame = match self.frames.next() {
                None => {
                    self.finished = true;
                    return Some(Err(ProviderError::TruncatedStream));
                }
                Some(Err(e)) => {
                    self.finished = true;
                    return Some(Err(e));
                }
                Some(Ok(f)) => f,
            };
            let decoded = match &mut self.decoder {
                Decoder::OpenAi(d) => d.decode(&frame.data),
                Decoder::Anthropic(d) => d.decode(frame.event.as_deref(), &frame.data),
            };
            match decoded {
                Ok(events) => self.pending.extend(events),
                Err(e) => {
                    self.finished = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

#[derive(Debug, Default)]
struct PartialCall {
    id: Option<String>,
    name: Option<String>,
    args: String,
}

/// Folds stream events into a final [`Response`].
#[derive(Debug)]
pub struct StreamAggregator {
    mode: UsageMode,
    text: String,
    calls: BTreeMap<usize, PartialCall>,
    input_tokens: u64,
    output_tokens: u64,
    stop: Option<StopReason>,
}

impl StreamAggregator {
    pub fn new(dialect: WireDialect) -> Self {
        StreamAggregator {
            mode: dialect.usage_mode(),
            text: String::new(),
            calls: BTreeMap::new(),
            input_tokens: 0,
            output_tokens: 0,
            stop: None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.stop.is_some()
    }

    pub fn push(&mut self, event: &StreamEvent) {
        if self.stop.is_some() {
            return;
        }
        match event {
            StreamEvent::TextDelta { text } => self.text.push_str(text),
            StreamEvent::ToolCallDelta {
                index,
                id,
                name,
                args_fragment,
            } => {
                let call = self.calls.entry(*index).or_default();
                if call.id.is_none() {
                    call.id = id.clone().filter(|s| !s.is_empty());
                }
                if call.name.is_none() {
                    call.name = name.clone().filter(|s| !s.is_empty());
                }
                call.args.push_str(args_fragment);
            }
            StreamEvent::UsageDelta {
                input_tokens,
                output_tokens,
            } => match self.mode {
                UsageMode::Increments => {
                    self.input_tokens += input_tokens.unwrap_or(0);
                    self.output_tokens += output_tokens.unwrap_or(0);
                }
                UsageMode::FinalSnapshot => {
                    if let Some(n) = input_tokens {
                        self.input_tokens = *n;
                    }
                    if let Some(n) = output_tokens {
                        self.output_tokens = *n;
                    }
                }
            },
            StreamEvent::Done { stop_reason } => self.stop = Some(*stop_reason),
        }
    }

    pub fn finish(self, model: &ModelRef, pricing: &PricingTable) -> Result<Response, ProviderError> {
        let stop = self.stop.ok_or(ProviderError::MissingDone)?;
        let mut calls = Vec::with_capacity(self.calls.len());
        for (index, partial) in self.calls {
            let name = partial
                .name
                .ok_or_else(|| ProviderError::StreamProtocol(format!("tool call {index} never received a name")))?;
            let arguments = parse_arguments(&partial.args)?;
            calls.push(ToolCall::new(partial.id.unwrap_or_default(), name, arguments));
        }
        let usage = Usage::new(self.input_tokens, self.output_tokens, 0.0);
        let mut response = Response::assemble(self.text, calls, usage, stop);
        response.price(model, pricing);
        Ok(response)
    }
}

/// Joins a complete event sequence into a priced response.
pub fn aggregate_stream<I>(events: I, pricing: &PricingTable, model: &ModelRef) -> Result<Response, ProviderError>
where
    I: IntoIterator<Item = StreamEvent>,
{
    let mut agg = StreamAggregator::new(model.dialect);
    for ev in events {
        agg.push(&ev);
    }
    agg.finish(model, pricing)
}

/// A piece of a response as a server would emit it.
#[derive(Debug, Clone, PartialEq)]
pub enum Fragment {
    Text(String),
    Call {
        index: usize,
        id: Option<String>,
        name: Option<String>,
        args: String,
    },
}

fn split_chars(s: &str, size: usize) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    chars.chunks(size.max(1)).map(|c| c.iter().collect()).collect()
}

/// Splits `response` into fragments of at most `chunk_size` characters.
/// Text comes first; fragments of different tool calls are interlaced at
/// random while each call's own fragments stay in order.
pub fn plan_fragments<G: Rng>(response: &Response, chunk_size: usize, rng: &mut G) -> Vec<Fragment> {
    let mut out: Vec<Fragment> = split_chars(&response.message.text, chunk_size)
        .into_iter()
        .map(Fragment::Text)
        .collect();
    let mut queues: Vec<VecDeque<Fragment>> = response
        .message
        .tool_calls
        .iter()
        .enumerate()
        .map(|(index, call)| {
            let args = serde_json::Value::Object(call.arguments.clone()).to_string();
            split_chars(&args, chunk_size)
                .into_iter()
                .enumerate()
                .map(|(i, piece)| Fragment::Call {
                    index,
                    id: (i == 0).then(|| call.id.clone()),
                    name: (i == 0).then(|| call.name.clone()),
                    args: piece,
                })
                .collect()
        })
        .collect();
    loop {
        let live: Vec<usize> = (0..queues.len()).filter(|&i| !queues[i].is_empty()).collect();
        if live.is_empty() {
            break;
        }
        let pick = live[rng.gen_range(0..live.len())];
        out.push(queues[pick].pop_front().expect("non-empty queue"));
    }
    out
}
