pub mod conllu;
pub mod encoder;
pub mod ner;
pub mod parserhead;
pub mod pipeline;
pub mod scorer;
pub mod seq2seq;
pub mod splitter;
pub mod subword;
pub mod training;
