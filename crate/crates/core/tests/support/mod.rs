pub mod text_reference;
