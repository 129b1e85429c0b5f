//! Writing, parsing and classified errors for the safetensors container.

use schatten_bounds::ingest::{parse_safetensors, write_safetensors, Dtype, TensorTable};

fn main() -> schatten_bounds::Result<()> {
    let mut t = TensorTable::new();
    t.insert("w", Dtype::F32, &[2, 2], &[1.0, 2.0, 3.0, 4.0])?;
    t.insert("h", Dtype::BF16, &[3], &[0.5, -1.0, 2.0])?;
    let bytes = write_safetensors(&t);
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    println!("header: {}", std::str::from_utf8(&bytes[8..8 + header_len]).unwrap());
    let back = parse_safetensors(&bytes)?;
    println!("round trip equal: {}", back == t);
    println!("w = {:?}", back.tensor_f64("w").unwrap());
    println!("h = {:?}", back.tensor_f64("h").unwrap());

    for (what, bad) in [("truncated", bytes[..5].to_vec()), ("payload cut", bytes[..bytes.len() - 4].to_vec())] {
        match parse_safetensors(&bad) {
            Ok(_) => println!("{what}: parsed"),
            Err(e) => println!("{what}: [{}] {e}", e.code()),
        }
    }
    Ok(())
}
