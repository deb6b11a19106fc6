method ARSEngine(nK_s: int, nT: int, K_g: int, sigma: real) returns (pattern: array<int>)
  requires nK_s > 0
  requires nT > 0
  requires K_g > 0
  requires sigma >= 0.0
  ensures fresh(pattern)
  ensures pattern.Length >= 1
{
  pattern := new int[nT];
  var i := 0;
  while i < nT
    invariant 0 <= i <= nT
    modifies pattern
  {
    pattern[i] := K_g;
    i := i + 1;
  }
}
